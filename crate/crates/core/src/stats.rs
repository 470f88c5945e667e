//! Land-use mix entropy, lexical salience-valence, Mann-Whitney U, Pearson
//! correlation and column standardization.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::ontology::Stoplist;
use crate::sentiment::SentimentClass;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("share {0} is negative or not finite")]
    BadShare(f64),
    #[error("shares sum to {0}, expected 1")]
    BadShareSum(f64),
    #[error("no land-use type has a positive share")]
    NoShares,
    #[error("empty sample")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("exact enumeration limited to {max} observations, got {got}")]
    TooLargeForExact { max: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} observations, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("zero variance")]
    ZeroVariance,
    #[error("column {index} is constant")]
    ConstantColumn { index: usize },
    #[error("empty corpus")]
    EmptyCorpus,
}

/// Land-use mix entropy of a CBG.
///
/// `shares` are land-use proportions summing to 1; zero shares are
/// ignored, so `N` counts the types actually present. One type gives 0,
/// otherwise `-(1/ln N) * sum(p ln p)`.
pub fn lum(shares: &[f64]) -> Result<f64, StatsError> {
    if let Some(&bad) = shares.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(StatsError::BadShare(bad));
    }
    let sum: f64 = shares.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(StatsError::BadShareSum(sum));
    }
    let present: Vec<f64> = shares.iter().copied().filter(|s| *s > 0.0).collect();
    match present.len() {
        0 => Err(StatsError::NoShares),
        1 => Ok(0.0),
        n => {
            let h: f64 = present.iter().map(|p| p * p.ln()).sum();
            Ok(-h / (n as f64).ln())
        }
    }
}

/// [`lum`] over raw areas (or percentages), normalized to shares first.
pub fn lum_from_areas(areas: &[f64]) -> Result<f64, StatsError> {
    if let Some(&bad) = areas.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(StatsError::BadShare(bad));
    }
    let total: f64 = areas.iter().sum();
    if total <= 0.0 {
        return Err(StatsError::NoShares);
    }
    let shares: Vec<f64> = areas.iter().map(|a| a / total).collect();
    lum(&shares)
}

/// Salience and valence of one word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsvaPoint {
    pub word: String,
    /// log10 of the number of reviews containing the word.
    pub salience: f64,
    /// (positive reviews - negative reviews) / reviews containing the word.
    pub valence: f64,
    pub n_total: usize,
    pub n_positive: usize,
    pub n_negative: usize,
}

/// Lexical salience-valence analysis over tokenized reviews with their
/// review-level polarity. Returns the `top_k` most salient non-stopwords;
/// ties are ordered lexicographically.
pub fn lsva(
    docs: &[(Vec<String>, SentimentClass)],
    top_k: usize,
    stoplist: &Stoplist,
) -> Result<Vec<LsvaPoint>, StatsError> {
    if docs.is_empty() {
        return Err(StatsError::EmptyCorpus);
    }
    // (total, positive, negative)
    let mut counts: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for (tokens, class) in docs {
        let distinct: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
        for w in distinct {
            if stoplist.contains(w) {
                continue;
            }
            let c = counts.entry(w).or_default();
            c.0 += 1;
            match class {
                SentimentClass::Positive => c.1 += 1,
                SentimentClass::Negative => c.2 += 1,
                SentimentClass::Neutral => {}
            }
        }
    }
    let mut points: Vec<LsvaPoint> = counts
        .into_iter()
        .map(|(w, (n, pos, neg))| LsvaPoint {
            word: w.to_string(),
            salience: (n as f64).log10(),
            valence: (pos as f64 - neg as f64) / n as f64,
            n_total: n,
            n_positive: pos,
            n_negative: neg,
        })
        .collect();
    points.sort_by_key(|p| std::cmp::Reverse(p.n_total));
    points.truncate(top_k);
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

impl TestMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TestMethod::Exact => "exact",
            TestMethod::NormalApprox => "normal_approx",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
}

/// Which p-value route [`mann_whitney_u_with`] takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MwuMethod {
    /// Exact for tie-free samples with at most [`EXACT_AUTO_LIMIT`]
    /// observations in total, normal approximation otherwise.
    Auto,
    Exact,
    Normal,
}

/// Combined sample size up to which [`MwuMethod::Auto`] enumerates.
pub const EXACT_AUTO_LIMIT: usize = 12;
/// Hard cap for forced exact enumeration (2^n subsets are visited).
pub const EXACT_MAX: usize = 20;

/// Midranks (1-based) of `values` and the sizes of tied groups.
pub fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// `(U_a, U_b)` with midranks for ties.
pub fn u_statistics(a: &[f64], b: &[f64]) -> (f64, f64) {
    let combined: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, _) = midranks(&combined);
    let na = a.len() as f64;
    let r_a: f64 = ranks[..a.len()].iter().sum();
    let u_a = r_a - na * (na + 1.0) / 2.0;
    (u_a, na * b.len() as f64 - u_a)
}

/// Two-sided Mann-Whitney U (Wilcoxon rank-sum) test with the automatic
/// method choice.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    mann_whitney_u_with(a, b, MwuMethod::Auto)
}

pub fn mann_whitney_u_with(
    a: &[f64],
    b: &[f64],
    method: MwuMethod,
) -> Result<TestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = a.len() + b.len();
    let combined: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&combined);
    let (u_a, u_b) = u_statistics(a, b);
    let u = u_a.min(u_b);

    let exact = match method {
        MwuMethod::Auto => ties.is_empty() && n <= EXACT_AUTO_LIMIT,
        MwuMethod::Exact => {
            if n > EXACT_MAX {
                return Err(StatsError::TooLargeForExact {
                    max: EXACT_MAX,
                    got: n,
                });
            }
            true
        }
        MwuMethod::Normal => false,
    };

    if exact {
        Ok(TestResult {
            statistic: u,
            p_value: exact_p(&ranks, a.len(), u),
            method: TestMethod::Exact,
        })
    } else {
        let (na, nb, nf) = (a.len() as f64, b.len() as f64, n as f64);
        let mean = na * nb / 2.0;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
        let var = na * nb / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
        let p = if var <= 0.0 {
            1.0
        } else {
            let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
            let std = Normal::new(0.0, 1.0).expect("standard normal");
            (2.0 * std.cdf(-z)).min(1.0)
        };
        Ok(TestResult {
            statistic: u,
            p_value: p,
            method: TestMethod::NormalApprox,
        })
    }
}

/// Enumerate every assignment of the observed ranks to group A and count
/// those at least as extreme as `u` (two-sided, via the smaller tail).
fn exact_p(ranks: &[f64], na: usize, u: f64) -> f64 {
    let n = ranks.len();
    let nb = n - na;
    let offset = (na * (na + 1)) as f64 / 2.0;
    let total_u = (na * nb) as f64;
    let mut extreme: u64 = 0;
    let mut total: u64 = 0;
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        total += 1;
        let r: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        let u_sub = r - offset;
        if u_sub.min(total_u - u_sub) <= u + 1e-9 {
            extreme += 1;
        }
    }
    (extreme as f64 / total as f64).min(1.0)
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew {
            need: 3,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Per-column mean and sample (n-1) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

fn mean_sd(col: ArrayView1<f64>) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Result<Self, StatsError> {
        if x.nrows() < 2 {
            return Err(StatsError::TooFew {
                need: 2,
                got: x.nrows(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        let mut means = Vec::with_capacity(x.ncols());
        let mut sds = Vec::with_capacity(x.ncols());
        for (index, col) in x.axis_iter(Axis(1)).enumerate() {
            let (m, sd) = mean_sd(col);
            if !(sd > 1e-300) || col.iter().all(|v| *v == col[0]) {
                return Err(StatsError::ConstantColumn { index });
            }
            means.push(m);
            sds.push(sd);
        }
        Ok(Standardizer { means, sds })
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| (v - self.means[j]) / self.sds[j]);
        }
        out
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| (v - self.means[j]) / self.sds[j])
            .collect()
    }
}

/// Z-score every column; returns the standardized matrix and the fitted
/// statistics.
pub fn zscore(x: &Array2<f64>) -> Result<(Array2<f64>, Standardizer), StatsError> {
    let s = Standardizer::fit(x)?;
    Ok((s.transform(x), s))
}

/// Z-score a single vector; returns `(z, mean, sd)`.
pub fn zscore_vector(y: &Array1<f64>) -> Result<(Array1<f64>, f64, f64), StatsError> {
    if y.len() < 2 {
        return Err(StatsError::TooFew {
            need: 2,
            got: y.len(),
        });
    }
    let (m, sd) = mean_sd(y.view());
    if !(sd > 1e-300) || y.iter().all(|v| *v == y[0]) {
        return Err(StatsError::ConstantColumn { index: 0 });
    }
    Ok((y.mapv(|v| (v - m) / sd), m, sd))
}
