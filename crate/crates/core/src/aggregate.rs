//! POI and CBG sentiment roll-ups and NAICS histograms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ingest::PointOfInterest;

/// Default minimum number of qualifying reviews for a POI (inclusive).
pub const DEFAULT_POI_MIN_REVIEWS: usize = 10;
/// Default CBG review total that must be exceeded (strict).
pub const DEFAULT_CBG_MIN_REVIEWS: usize = 10;

/// A density-related review with an applicable numeric sentiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredReview {
    pub review_id: String,
    pub poi_id: String,
    pub sentiment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiSentiment {
    pub poi_id: String,
    pub cbg_id: Option<String>,
    pub latitude: f64,
    pub longitude: f64,
    pub naics_code: String,
    pub naics_top2: String,
    pub n_density_reviews: usize,
    pub mean_sentiment: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoiRollup {
    pub retained: Vec<PoiSentiment>,
    /// POIs with at least one review but fewer than the threshold.
    pub dropped_below_threshold: usize,
    /// Reviews whose POI is not in the catalog.
    pub orphan_reviews: usize,
}

/// Mean review sentiment per POI, keeping POIs with at least `min_reviews`
/// reviews. Output is ordered by `poi_id`.
pub fn poi_sentiment(
    reviews: &[ScoredReview],
    pois: &[PointOfInterest],
    min_reviews: usize,
) -> PoiRollup {
    let catalog: BTreeMap<&str, &PointOfInterest> =
        pois.iter().map(|p| (p.poi_id.as_str(), p)).collect();
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    let mut out = PoiRollup::default();
    for r in reviews {
        if !catalog.contains_key(r.poi_id.as_str()) {
            out.orphan_reviews += 1;
            continue;
        }
        let e = sums.entry(r.poi_id.as_str()).or_insert((0.0, 0));
        e.0 += r.sentiment;
        e.1 += 1;
    }
    for (poi_id, (sum, n)) in sums {
        if n < min_reviews {
            out.dropped_below_threshold += 1;
            continue;
        }
        let p = catalog[poi_id];
        out.retained.push(PoiSentiment {
            poi_id: poi_id.to_string(),
            cbg_id: p.cbg_id.clone(),
            latitude: p.latitude,
            longitude: p.longitude,
            naics_code: p.naics_code.clone(),
            naics_top2: p.naics_code.chars().take(2).collect(),
            n_density_reviews: n,
            mean_sentiment: sum / n as f64,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbgSentiment {
    pub cbg_id: String,
    pub total_reviews: usize,
    pub n_pois: usize,
    pub weighted_mean: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CbgRollup {
    pub retained: Vec<CbgSentiment>,
    pub dropped_below_threshold: usize,
    pub unassigned_pois: usize,
}

/// Review-count-weighted mean of POI sentiment per CBG. A CBG is kept only
/// when its review total strictly exceeds `min_reviews_exclusive`. POIs
/// without a CBG are counted and left out.
pub fn cbg_sentiment(pois: &[PoiSentiment], min_reviews_exclusive: usize) -> CbgRollup {
    let mut groups: BTreeMap<&str, (f64, usize, usize)> = BTreeMap::new();
    let mut out = CbgRollup::default();
    for p in pois {
        let Some(cbg) = p.cbg_id.as_deref() else {
            out.unassigned_pois += 1;
            continue;
        };
        let g = groups.entry(cbg).or_insert((0.0, 0, 0));
        g.0 += p.mean_sentiment * p.n_density_reviews as f64;
        g.1 += p.n_density_reviews;
        g.2 += 1;
    }
    for (cbg_id, (weighted, total, n_pois)) in groups {
        if total <= min_reviews_exclusive || total == 0 {
            out.dropped_below_threshold += 1;
            continue;
        }
        out.retained.push(CbgSentiment {
            cbg_id: cbg_id.to_string(),
            total_reviews: total,
            n_pois,
            weighted_mean: weighted / total as f64,
        });
    }
    out
}

/// NAICS sectors by 2-digit prefix. Ranges (31-33, 44-45, 48-49) share one
/// entry.
pub const NAICS_SECTORS: [(&str, &str); 20] = [
    ("11", "Agriculture, Forestry, Fishing and Hunting"),
    ("21", "Mining, Quarrying, and Oil and Gas Extraction"),
    ("22", "Utilities"),
    ("23", "Construction"),
    ("31-33", "Manufacturing"),
    ("42", "Wholesale Trade"),
    ("44-45", "Retail Trade"),
    ("48-49", "Transportation and Warehousing"),
    ("51", "Information"),
    ("52", "Finance and Insurance"),
    ("53", "Real Estate and Rental and Leasing"),
    ("54", "Professional, Scientific, and Technical Services"),
    ("55", "Management of Companies and Enterprises"),
    (
        "56",
        "Administrative and Support and Waste Management and Remediation Services",
    ),
    ("61", "Educational Services"),
    ("62", "Health Care and Social Assistance"),
    ("71", "Arts, Entertainment, and Recreation"),
    ("72", "Accommodation and Food Services"),
    ("81", "Other Services (except Public Administration)"),
    ("92", "Public Administration"),
];

pub const UNKNOWN_SECTOR: &str = "unknown";

/// Sector key and name for a NAICS code, or `None` if the code is not a
/// digit string with a known 2-digit prefix.
pub fn naics_sector(code: &str) -> Option<(&'static str, &'static str)> {
    if code.len() < 2 || !code.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let prefix = &code[..2];
    let key = match prefix {
        "31" | "32" | "33" => "31-33",
        "44" | "45" => "44-45",
        "48" | "49" => "48-49",
        other => other,
    };
    NAICS_SECTORS.iter().find(|(k, _)| *k == key).copied()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NaicsRollup {
    /// Sector key (or "unknown") to POI count.
    pub sectors: BTreeMap<String, usize>,
    /// Sector key to counts per 4-digit industry group. Codes shorter than
    /// four digits are kept whole.
    pub subcategories: BTreeMap<String, BTreeMap<String, usize>>,
}

impl NaicsRollup {
    pub fn total(&self) -> usize {
        self.sectors.values().sum()
    }
}

pub fn naics_rollup<'a, I>(codes: I) -> NaicsRollup
where
    I: IntoIterator<Item = &'a str>,
{
    let mut out = NaicsRollup::default();
    for code in codes {
        match naics_sector(code) {
            Some((key, _)) => {
                *out.sectors.entry(key.to_string()).or_insert(0) += 1;
                let sub: String = code.chars().take(4).collect();
                *out.subcategories
                    .entry(key.to_string())
                    .or_default()
                    .entry(sub)
                    .or_insert(0) += 1;
            }
            None => *out.sectors.entry(UNKNOWN_SECTOR.to_string()).or_insert(0) += 1,
        }
    }
    out
}
