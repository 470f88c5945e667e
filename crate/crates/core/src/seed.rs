//! Seed derivation.
//!
//! Every random choice in the pipeline draws from a ChaCha8 stream seeded by
//! a value derived from one user seed: [`mix`] combines a seed with a
//! numeric stream id through SplitMix64, and [`for_label`] first hashes a
//! text label (a stage name, say) with 64-bit FNV-1a.

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a hash.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xCBF2_9CE4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed for numeric stream `stream` under `seed`.
pub fn mix(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

/// Seed for the named stream `label` under `seed`.
pub fn for_label(seed: u64, label: &str) -> u64 {
    mix(seed, fnv1a(label.as_bytes()))
}
