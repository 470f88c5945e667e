use densitylens::stats::{lum, lum_from_areas, mann_whitney_u, pearson, TestMethod};

fn u_by_pairs(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

fn permutation_p(a: &[f64], b: &[f64]) -> f64 {
    let pool: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pool.len();
    let total_u = (a.len() * b.len()) as f64;
    let observed = u_by_pairs(a, b).min(total_u - u_by_pairs(a, b));
    let (mut extreme, mut total) = (0usize, 0usize);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let left: Vec<f64> = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| pool[i])
            .collect();
        let right: Vec<f64> = (0..n)
            .filter(|i| mask >> i & 1 == 0)
            .map(|i| pool[i])
            .collect();
        let u = u_by_pairs(&left, &right);
        total += 1;
        if u.min(total_u - u) <= observed {
            extreme += 1;
        }
    }
    extreme as f64 / total as f64
}

#[test]
fn exact_mann_whitney_matches_permutation_enumeration() {
    let values: Vec<f64> = (1..=8).map(f64::from).collect();
    let mut checked = 0;
    for mask_a in 1u32..(1 << 8) {
        if mask_a.count_ones() > 3 {
            continue;
        }
        for mask_b in 1u32..(1 << 8) {
            if mask_a & mask_b != 0 || mask_b.count_ones() > 3 {
                continue;
            }
            let a: Vec<f64> = (0..8)
                .filter(|i| mask_a >> i & 1 == 1)
                .map(|i| values[i])
                .collect();
            let b: Vec<f64> = (0..8)
                .filter(|i| mask_b >> i & 1 == 1)
                .map(|i| values[i])
                .collect();
            let r = mann_whitney_u(&a, &b).unwrap();
            assert_eq!(r.method, TestMethod::Exact);
            assert_eq!(r.p_value, permutation_p(&a, &b), "{a:?} vs {b:?}");
            let u = u_by_pairs(&a, &b);
            assert_eq!(r.statistic, u.min((a.len() * b.len()) as f64 - u));
            checked += 1;
        }
    }
    assert!(checked > 1000);
}

#[test]
fn separated_triples() {
    let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    assert_eq!(r.statistic, 0.0);
    assert!((r.p_value - 0.1).abs() < 1e-15);
}

#[test]
fn large_samples_use_normal_approximation() {
    let a: Vec<f64> = (0..30).map(f64::from).collect();
    let b: Vec<f64> = (0..30).map(|v| f64::from(v) + 0.5).collect();
    let r = mann_whitney_u(&a, &b).unwrap();
    assert_eq!(r.method, TestMethod::NormalApprox);
    assert!(r.p_value > 0.5);
}

fn direct_lum(shares: &[f64]) -> f64 {
    let n = shares.len() as f64;
    let mut acc = 0.0;
    for p in shares {
        acc += p * p.ln() / n.ln();
    }
    -acc
}

#[test]
fn land_use_mix_closed_forms() {
    assert_eq!(lum(&[1.0]).unwrap(), 0.0);
    assert_eq!(lum(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
    assert!((lum(&[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-12);
    let v = lum(&[0.5, 0.3, 0.2]).unwrap();
    assert!((v - direct_lum(&[0.5, 0.3, 0.2])).abs() < 1e-10);
    assert!((v - 0.9372).abs() < 1e-4);
    assert!((lum_from_areas(&[5.0, 3.0, 2.0]).unwrap() - v).abs() < 1e-12);
}

#[test]
fn pearson_matches_textbook_formula() {
    let x = [1.0, 2.0, 4.0, 7.0, 11.0];
    let y = [2.0, 1.0, 5.0, 6.0, 12.0];
    let mx = x.iter().sum::<f64>() / 5.0;
    let my = y.iter().sum::<f64>() / 5.0;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    assert!((pearson(&x, &y).unwrap() - sxy / (sxx * syy).sqrt()).abs() < 1e-12);
}
