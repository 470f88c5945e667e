//! Review mining and statistics for urban-density perception studies.
//!
//! The crate covers the compute side of the pipeline: reading POI catalogs
//! and review dumps ([`ingest`]), lexicon filtering ([`ontology`]),
//! tokenization and TF-IDF ([`textprep`]), review classification
//! ([`classify`]), sentence sentiment ([`sentiment`]), POI/CBG roll-ups
//! ([`aggregate`]), descriptive and inferential statistics ([`stats`]) and
//! SIMPLS regression with jack-knife inference ([`pls`]). Random streams are
//! derived from a single seed as described in [`seed`].

pub mod aggregate;
pub mod classify;
pub mod ingest;
pub mod ontology;
pub mod pls;
pub mod seed;
pub mod sentiment;
pub mod stats;
pub mod textprep;
