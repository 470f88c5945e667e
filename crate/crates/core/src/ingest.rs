//! Input artifacts: POI catalog, per-POI review files, CBG factor table and
//! CBG polygons.
//!
//! Row-level problems are collected in a [`ValidationReport`] and the row is
//! skipped; structural problems (missing columns, duplicate keys, unreadable
//! files) abort with an [`IngestError`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{source_name}: missing column {column:?}")]
    MissingColumn { source_name: String, column: String },
    #[error("{source_name}: duplicate keys {ids:?}")]
    DuplicateKeys {
        source_name: String,
        ids: Vec<String>,
    },
    #[error("{path}: malformed document: {message}")]
    MalformedDocument { path: String, message: String },
    #[error("geometry error for {cbg_id}: {message}")]
    Geometry { cbg_id: String, message: String },
    #[error("no polygons supplied")]
    NoPolygons,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}: {source}")]
    Csv {
        source_name: String,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    Range,
    Parse,
    DuplicateKey,
    UnknownKey,
}

/// One row-level problem. `row` is 1-based over data rows (header excluded)
/// or the array position for JSON documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub source: String,
    pub row: Option<usize>,
    pub column: Option<String>,
    pub kind: IssueKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    fn push(
        &mut self,
        source: &str,
        row: Option<usize>,
        column: Option<&str>,
        kind: IssueKind,
        message: impl Into<String>,
    ) {
        self.issues.push(ValidationIssue {
            source: source.to_string(),
            row,
            column: column.map(str::to_string),
            kind,
            message: message.into(),
        });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.issues.extend(other.issues);
    }

    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn len(&self) -> usize {
        self.issues.len()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["source", "row", "column", "kind", "message"])?;
        for i in &self.issues {
            let kind = serde_json::to_value(i.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            w.write_record([
                i.source.as_str(),
                &i.row.map(|r| r.to_string()).unwrap_or_default(),
                i.column.as_deref().unwrap_or(""),
                &kind,
                &i.message,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointOfInterest {
    pub poi_id: String,
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    pub naics_code: String,
    pub cbg_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub review_id: String,
    pub poi_id: String,
    pub author: String,
    pub rating: u8,
    pub likes: u64,
    pub text: String,
}

pub const POI_COLUMNS: [&str; 6] = [
    "poi_id",
    "name",
    "latitude",
    "longitude",
    "naics_code",
    "cbg_id",
];

fn csv_err(source_name: &str) -> impl Fn(csv::Error) -> IngestError + '_ {
    move |source| IngestError::Csv {
        source_name: source_name.to_string(),
        source,
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Map each required column to its position in `headers`.
fn column_positions(
    headers: &csv::StringRecord,
    required: &[&str],
    source_name: &str,
) -> Result<Vec<usize>, IngestError> {
    required
        .iter()
        .map(|col| {
            headers
                .iter()
                .position(|h| h.trim() == *col)
                .ok_or_else(|| IngestError::MissingColumn {
                    source_name: source_name.to_string(),
                    column: col.to_string(),
                })
        })
        .collect()
}

fn duplicates<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut dup = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            dup.insert(id.to_string());
        }
    }
    dup.into_iter().collect()
}

#[derive(Debug, Clone, Default)]
pub struct PoiLoad {
    pub pois: Vec<PointOfInterest>,
    pub report: ValidationReport,
}

/// Parse a POI catalog with header
/// `poi_id,name,latitude,longitude,naics_code,cbg_id`.
pub fn read_poi_catalog<R: Read>(reader: R, source_name: &str) -> Result<PoiLoad, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_err(source_name))?.clone();
    let pos = column_positions(&headers, &POI_COLUMNS, source_name)?;
    let mut out = PoiLoad::default();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.report.push(
                    source_name,
                    Some(row),
                    None,
                    IssueKind::Parse,
                    e.to_string(),
                );
                continue;
            }
        };
        let field = |k: usize| rec.get(pos[k]).unwrap_or("").trim();
        let poi_id = field(0);
        if poi_id.is_empty() {
            out.report.push(
                source_name,
                Some(row),
                Some("poi_id"),
                IssueKind::Parse,
                "empty poi_id",
            );
            continue;
        }
        let mut coord = |k: usize, lo: f64, hi: f64| -> Option<f64> {
            let name = POI_COLUMNS[k];
            match field(k).parse::<f64>() {
                Ok(v) if v.is_finite() && (lo..=hi).contains(&v) => Some(v),
                Ok(v) => {
                    out.report.push(
                        source_name,
                        Some(row),
                        Some(name),
                        IssueKind::Range,
                        format!("{name} {v} outside [{lo}, {hi}]"),
                    );
                    None
                }
                Err(_) => {
                    out.report.push(
                        source_name,
                        Some(row),
                        Some(name),
                        IssueKind::Parse,
                        format!("{name} {:?} is not a number", field(k)),
                    );
                    None
                }
            }
        };
        let (Some(latitude), Some(longitude)) = (coord(2, -90.0, 90.0), coord(3, -180.0, 180.0))
        else {
            continue;
        };
        let naics = field(4);
        if naics.is_empty() || !naics.chars().all(|c| c.is_ascii_digit()) || naics.len() > 6 {
            out.report.push(
                source_name,
                Some(row),
                Some("naics_code"),
                IssueKind::Parse,
                format!("naics_code {naics:?} must be 2-6 digits"),
            );
            continue;
        }
        let cbg = field(5);
        out.pois.push(PointOfInterest {
            poi_id: poi_id.to_string(),
            name: field(1).to_string(),
            latitude,
            longitude,
            naics_code: naics.to_string(),
            cbg_id: (!cbg.is_empty()).then(|| cbg.to_string()),
        });
    }
    let dup = duplicates(out.pois.iter().map(|p| p.poi_id.as_str()));
    if !dup.is_empty() {
        return Err(IngestError::DuplicateKeys {
            source_name: source_name.to_string(),
            ids: dup,
        });
    }
    Ok(out)
}

pub fn load_poi_catalog(path: &Path) -> Result<PoiLoad, IngestError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    read_poi_catalog(f, &path.display().to_string())
}

pub fn write_poi_catalog<W: Write>(writer: W, pois: &[PointOfInterest]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(POI_COLUMNS)?;
    for p in pois {
        w.write_record([
            p.poi_id.as_str(),
            &p.name,
            &p.latitude.to_string(),
            &p.longitude.to_string(),
            &p.naics_code,
            p.cbg_id.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A review that could not be attached to a known POI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedReview {
    pub poi_id: String,
    pub review_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ReviewLoad {
    pub reviews: Vec<Review>,
    pub skipped: Vec<SkippedReview>,
    pub report: ValidationReport,
}

#[derive(Deserialize)]
struct RawReview {
    review_id: String,
    author: String,
    rating: i64,
    likes: i64,
    text: String,
}

#[derive(Serialize)]
struct ReviewDocEntry<'a> {
    review_id: &'a str,
    author: &'a str,
    rating: u8,
    likes: u64,
    text: &'a str,
}

/// Parse one review document for `poi_id`. Text is NFC-normalized.
pub fn parse_review_document(
    json: &str,
    poi_id: &str,
    source_name: &str,
) -> Result<(Vec<Review>, ValidationReport), IngestError> {
    let malformed = |message: String| IngestError::MalformedDocument {
        path: source_name.to_string(),
        message,
    };
    let items: Vec<serde_json::Value> =
        serde_json::from_str(json).map_err(|e| malformed(e.to_string()))?;
    let mut report = ValidationReport::default();
    let mut reviews = Vec::with_capacity(items.len());
    for (i, item) in items.into_iter().enumerate() {
        let row = Some(i + 1);
        let raw: RawReview = match serde_json::from_value(item) {
            Ok(r) => r,
            Err(e) => {
                report.push(source_name, row, None, IssueKind::Parse, e.to_string());
                continue;
            }
        };
        if !(1..=5).contains(&raw.rating) {
            report.push(
                source_name,
                row,
                Some("rating"),
                IssueKind::Range,
                format!("rating {} outside 1..5 ({})", raw.rating, raw.review_id),
            );
            continue;
        }
        if raw.likes < 0 {
            report.push(
                source_name,
                row,
                Some("likes"),
                IssueKind::Range,
                format!("negative likes ({})", raw.review_id),
            );
            continue;
        }
        reviews.push(Review {
            review_id: raw.review_id,
            poi_id: poi_id.to_string(),
            author: raw.author,
            rating: raw.rating as u8,
            likes: raw.likes as u64,
            text: raw.text.nfc().collect(),
        });
    }
    Ok((reviews, report))
}

pub fn write_review_document<W: Write>(writer: W, reviews: &[Review]) -> serde_json::Result<()> {
    let entries: Vec<ReviewDocEntry> = reviews
        .iter()
        .map(|r| ReviewDocEntry {
            review_id: &r.review_id,
            author: &r.author,
            rating: r.rating,
            likes: r.likes,
            text: &r.text,
        })
        .collect();
    serde_json::to_writer_pretty(writer, &entries)
}

/// Load every `<poi_id>.json` under `dir`. Files are parsed in parallel and
/// merged in file-name order. Reviews of unknown POIs go to the skip report;
/// a repeated `review_id` keeps the first occurrence.
pub fn load_reviews(dir: &Path, known_pois: &BTreeSet<String>) -> Result<ReviewLoad, IngestError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let parsed: Vec<Result<(String, Vec<Review>, ValidationReport), IngestError>> = files
        .par_iter()
        .map(|path| {
            let poi_id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let (reviews, report) =
                parse_review_document(&text, &poi_id, &format!("{poi_id}.json"))?;
            Ok((poi_id, reviews, report))
        })
        .collect();

    let mut out = ReviewLoad::default();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for item in parsed {
        let (poi_id, reviews, report) = item?;
        out.report.extend(report);
        if !known_pois.contains(&poi_id) {
            out.skipped
                .extend(reviews.into_iter().map(|r| SkippedReview {
                    poi_id: poi_id.clone(),
                    review_id: r.review_id,
                    reason: "unknown poi_id".to_string(),
                }));
            continue;
        }
        for r in reviews {
            if !seen.insert(r.review_id.clone()) {
                out.report.push(
                    &format!("{poi_id}.json"),
                    None,
                    Some("review_id"),
                    IssueKind::DuplicateKey,
                    format!("duplicate review_id {}", r.review_id),
                );
                continue;
            }
            out.reviews.push(r);
        }
    }
    Ok(out)
}

/// Value constraint attached to a factor column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorDomain {
    Percent,
    NonNegative,
    Unit,
}

impl FactorDomain {
    fn check(self, v: f64) -> bool {
        match self {
            FactorDomain::Percent => (0.0..=100.0).contains(&v),
            FactorDomain::NonNegative => v >= 0.0,
            FactorDomain::Unit => (0.0..=1.0).contains(&v),
        }
    }

    fn describe(self) -> &'static str {
        match self {
            FactorDomain::Percent => "[0, 100]",
            FactorDomain::NonNegative => "[0, inf)",
            FactorDomain::Unit => "[0, 1]",
        }
    }
}

/// Independent variables of the CBG regression, in table order, with their
/// value domain.
pub const FACTOR_COLUMNS: [(&str, FactorDomain); 22] = [
    ("pct_college", FactorDomain::Percent),
    ("median_income", FactorDomain::NonNegative),
    ("pct_white", FactorDomain::Percent),
    ("pct_african_american", FactorDomain::Percent),
    ("pct_hispanic", FactorDomain::Percent),
    ("pct_asian", FactorDomain::Percent),
    ("pct_age_18_44", FactorDomain::Percent),
    ("pct_age_45_64", FactorDomain::Percent),
    ("pct_age_over_65", FactorDomain::Percent),
    ("pct_male", FactorDomain::Percent),
    ("population_density", FactorDomain::NonNegative),
    ("bus_stop_density", FactorDomain::NonNegative),
    ("metro_station_density", FactorDomain::NonNegative),
    ("primary_road_density", FactorDomain::NonNegative),
    ("secondary_road_density", FactorDomain::NonNegative),
    ("minor_road_density", FactorDomain::NonNegative),
    ("pct_industrial", FactorDomain::Percent),
    ("pct_institutional", FactorDomain::Percent),
    ("pct_utilities", FactorDomain::Percent),
    ("pct_commercial", FactorDomain::Percent),
    ("pct_residential", FactorDomain::Percent),
    ("lum", FactorDomain::Unit),
];

pub fn factor_names() -> Vec<&'static str> {
    FACTOR_COLUMNS.iter().map(|(n, _)| *n).collect()
}

/// One census block group's socio-spatial factors, in [`FACTOR_COLUMNS`]
/// order. Income is in thousands of dollars per household, population
/// density in thousands of persons per square mile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbgRecord {
    pub cbg_id: String,
    pub values: [f64; 22],
}

impl CbgRecord {
    pub fn get(&self, column: &str) -> Option<f64> {
        FACTOR_COLUMNS
            .iter()
            .position(|(n, _)| *n == column)
            .map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, Default)]
pub struct CbgLoad {
    pub records: Vec<CbgRecord>,
    pub report: ValidationReport,
}

/// Parse the CBG factor table: `cbg_id` plus every [`FACTOR_COLUMNS`] name.
/// Extra columns are ignored. No cross-field constraints are imposed.
pub fn read_cbg_factors<R: Read>(reader: R, source_name: &str) -> Result<CbgLoad, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_err(source_name))?.clone();
    let mut required = vec!["cbg_id"];
    required.extend(FACTOR_COLUMNS.iter().map(|(n, _)| *n));
    let pos = column_positions(&headers, &required, source_name)?;
    let mut out = CbgLoad::default();
    'rows: for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.report.push(
                    source_name,
                    Some(row),
                    None,
                    IssueKind::Parse,
                    e.to_string(),
                );
                continue;
            }
        };
        let cbg_id = rec.get(pos[0]).unwrap_or("").trim();
        if cbg_id.is_empty() {
            out.report.push(
                source_name,
                Some(row),
                Some("cbg_id"),
                IssueKind::Parse,
                "empty cbg_id",
            );
            continue;
        }
        let mut values = [0.0; 22];
        for (k, (name, domain)) in FACTOR_COLUMNS.iter().enumerate() {
            let cell = rec.get(pos[k + 1]).unwrap_or("").trim();
            let v = match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    out.report.push(
                        source_name,
                        Some(row),
                        Some(name),
                        IssueKind::Parse,
                        format!("{name} {cell:?} is not a number"),
                    );
                    continue 'rows;
                }
            };
            if !domain.check(v) {
                out.report.push(
                    source_name,
                    Some(row),
                    Some(name),
                    IssueKind::Range,
                    format!("{name} {v} outside {}", domain.describe()),
                );
                continue 'rows;
            }
            values[k] = v;
        }
        out.records.push(CbgRecord {
            cbg_id: cbg_id.to_string(),
            values,
        });
    }
    let dup = duplicates(out.records.iter().map(|r| r.cbg_id.as_str()));
    if !dup.is_empty() {
        return Err(IngestError::DuplicateKeys {
            source_name: source_name.to_string(),
            ids: dup,
        });
    }
    Ok(out)
}

pub fn load_cbg_factors(path: &Path) -> Result<CbgLoad, IngestError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    read_cbg_factors(f, &path.display().to_string())
}

pub fn write_cbg_factors<W: Write>(writer: W, records: &[CbgRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["cbg_id"];
    header.extend(FACTOR_COLUMNS.iter().map(|(n, _)| *n));
    w.write_record(&header)?;
    for r in records {
        let mut rec = vec![r.cbg_id.clone()];
        rec.extend(r.values.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// A CBG boundary. All rings (outer boundaries and holes) take part in the
/// even-odd test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbgPolygon {
    pub cbg_id: String,
    /// Vertices as (longitude, latitude).
    pub rings: Vec<Vec<(f64, f64)>>,
}

impl CbgPolygon {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.rings.is_empty() {
            return Err(IngestError::Geometry {
                cbg_id: self.cbg_id.clone(),
                message: "polygon has no rings".into(),
            });
        }
        for ring in &self.rings {
            if ring.len() < 4 {
                return Err(IngestError::Geometry {
                    cbg_id: self.cbg_id.clone(),
                    message: format!("ring has {} vertices (need at least 4)", ring.len()),
                });
            }
            if ring.first() != ring.last() {
                return Err(IngestError::Geometry {
                    cbg_id: self.cbg_id.clone(),
                    message: "ring is not closed".into(),
                });
            }
        }
        Ok(())
    }

    /// Even-odd ray casting; points on an edge or vertex count as inside.
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        let mut inside = false;
        for ring in &self.rings {
            for w in ring.windows(2) {
                let ((x1, y1), (x2, y2)) = (w[0], w[1]);
                if on_segment(lon, lat, x1, y1, x2, y2) {
                    return true;
                }
                if (y1 > lat) != (y2 > lat) {
                    let x_cross = x1 + (lat - y1) * (x2 - x1) / (y2 - y1);
                    if lon < x_cross {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }
}

fn on_segment(px: f64, py: f64, x1: f64, y1: f64, x2: f64, y2: f64) -> bool {
    let cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1);
    let scale = (x2 - x1).abs().max((y2 - y1).abs()).max(1.0);
    if cross.abs() > 1e-12 * scale {
        return false;
    }
    px >= x1.min(x2) && px <= x1.max(x2) && py >= y1.min(y2) && py <= y1.max(y2)
}

fn parse_ring(v: &serde_json::Value) -> Option<Vec<(f64, f64)>> {
    v.as_array()?
        .iter()
        .map(|pt| {
            let c = pt.as_array()?;
            Some((c.first()?.as_f64()?, c.get(1)?.as_f64()?))
        })
        .collect()
}

/// Parse a GeoJSON FeatureCollection of Polygon / MultiPolygon features,
/// each with a `cbg_id` property.
pub fn parse_cbg_polygons(json: &str, source_name: &str) -> Result<Vec<CbgPolygon>, IngestError> {
    let malformed = |message: String| IngestError::MalformedDocument {
        path: source_name.to_string(),
        message,
    };
    let doc: serde_json::Value =
        serde_json::from_str(json).map_err(|e| malformed(e.to_string()))?;
    let features = doc
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| malformed("expected a FeatureCollection".into()))?;
    let mut out = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let cbg_id = match f.pointer("/properties/cbg_id") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => return Err(malformed(format!("feature {i} lacks a cbg_id property"))),
        };
        let geom_type = f.pointer("/geometry/type").and_then(|t| t.as_str());
        let coords = f
            .pointer("/geometry/coordinates")
            .ok_or_else(|| malformed(format!("feature {i} has no coordinates")))?;
        let polygons: Vec<&serde_json::Value> = match geom_type {
            Some("Polygon") => vec![coords],
            Some("MultiPolygon") => coords
                .as_array()
                .map(|a| a.iter().collect())
                .unwrap_or_default(),
            other => {
                return Err(malformed(format!(
                    "feature {i} has unsupported geometry {other:?}"
                )))
            }
        };
        let mut rings = Vec::new();
        for poly in polygons {
            for ring in poly.as_array().into_iter().flatten() {
                rings.push(
                    parse_ring(ring)
                        .ok_or_else(|| malformed(format!("feature {i} has a bad ring")))?,
                );
            }
        }
        let polygon = CbgPolygon { cbg_id, rings };
        polygon.validate()?;
        out.push(polygon);
    }
    Ok(out)
}

pub fn load_cbg_polygons(path: &Path) -> Result<Vec<CbgPolygon>, IngestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_cbg_polygons(&text, &path.display().to_string())
}

/// The POI's CBG: a pre-assigned `cbg_id` wins; otherwise the first polygon
/// containing the point, in input order.
pub fn assign_cbg(
    poi: &PointOfInterest,
    polygons: &[CbgPolygon],
) -> Result<Option<String>, IngestError> {
    if let Some(id) = &poi.cbg_id {
        return Ok(Some(id.clone()));
    }
    if polygons.is_empty() {
        return Err(IngestError::NoPolygons);
    }
    for p in polygons {
        p.validate()?;
    }
    Ok(polygons
        .iter()
        .find(|p| p.contains(poi.longitude, poi.latitude))
        .map(|p| p.cbg_id.clone()))
}

/// Group reviews by POI id.
pub fn reviews_by_poi(reviews: &[Review]) -> BTreeMap<&str, Vec<&Review>> {
    let mut m: BTreeMap<&str, Vec<&Review>> = BTreeMap::new();
    for r in reviews {
        m.entry(r.poi_id.as_str()).or_default().push(r);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "poi_id,name,latitude,longitude,naics_code,cbg_id\n";

    #[test]
    fn three_row_catalog() {
        let csv = format!(
            "{HEADER}p1,Cafe,33.7,-84.4,722511,\np2,\"Bar, Grill\",33.8,-84.3,7224,c1\np3,Apt,33.75,-84.39,5311,\n"
        );
        let load = read_poi_catalog(csv.as_bytes(), "pois.csv").unwrap();
        assert_eq!(load.pois.len(), 3);
        assert!(load.report.is_empty());
        assert_eq!(load.pois[1].name, "Bar, Grill");
        assert_eq!(load.pois[1].cbg_id.as_deref(), Some("c1"));
        assert_eq!(load.pois[0].cbg_id, None);
    }

    #[test]
    fn latitude_out_of_range_is_row_error() {
        let csv = format!("{HEADER}p1,A,95.0,-84.4,7225,\np2,B,33.0,-84.4,7225,\n");
        let load = read_poi_catalog(csv.as_bytes(), "pois.csv").unwrap();
        assert_eq!(load.pois.len(), 1);
        assert_eq!(load.report.issues[0].kind, IssueKind::Range);
        assert_eq!(load.report.issues[0].column.as_deref(), Some("latitude"));
        assert_eq!(load.report.issues[0].row, Some(1));
    }

    #[test]
    fn duplicate_poi_is_error() {
        let csv = format!("{HEADER}p1,A,33,-84,7225,\np1,B,33,-84,7225,\n");
        match read_poi_catalog(csv.as_bytes(), "pois.csv") {
            Err(IngestError::DuplicateKeys { ids, .. }) => assert_eq!(ids, vec!["p1"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_named() {
        let csv = "poi_id,name,latitude,longitude,cbg_id\np1,A,1,1,\n";
        match read_poi_catalog(csv.as_bytes(), "pois.csv") {
            Err(IngestError::MissingColumn { column, .. }) => assert_eq!(column, "naics_code"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_naics_rejected() {
        let csv = format!("{HEADER}p1,A,33,-84,44X,\n");
        let load = read_poi_catalog(csv.as_bytes(), "pois.csv").unwrap();
        assert!(load.pois.is_empty());
        assert_eq!(load.report.issues[0].column.as_deref(), Some("naics_code"));
    }

    #[test]
    fn review_document_rows() {
        let json = r#"[
            {"review_id":"r1","author":"a","rating":5,"likes":1,"text":"Great"},
            {"review_id":"r2","author":"b","rating":6,"likes":0,"text":"Bad rating"},
            {"review_id":"r3","author":"c","rating":2,"likes":0,"text":"Café"}
        ]"#;
        let (reviews, report) = parse_review_document(json, "p1", "p1.json").unwrap();
        assert_eq!(reviews.len(), 2);
        assert_eq!(report.len(), 1);
        assert_eq!(report.issues[0].column.as_deref(), Some("rating"));
        assert_eq!(reviews[1].text, "Caf\u{e9}");
    }

    #[test]
    fn malformed_document_is_file_error() {
        assert!(matches!(
            parse_review_document("{not json", "p", "p.json"),
            Err(IngestError::MalformedDocument { .. })
        ));
    }

    #[test]
    fn load_reviews_links_and_skips() {
        let dir = tempfile::tempdir().unwrap();
        let doc = |ids: &[&str]| {
            let items: Vec<String> = ids
                .iter()
                .map(|id| {
                    format!(
                        r#"{{"review_id":"{id}","author":"x","rating":4,"likes":0,"text":"ok"}}"#
                    )
                })
                .collect();
            format!("[{}]", items.join(","))
        };
        fs::write(dir.path().join("p1.json"), doc(&["a", "b"])).unwrap();
        fs::write(dir.path().join("ghost.json"), doc(&["c", "d"])).unwrap();
        fs::write(dir.path().join("p2.json"), doc(&["a"])).unwrap();
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let known: BTreeSet<String> = ["p1", "p2"].iter().map(|s| s.to_string()).collect();
        let load = load_reviews(dir.path(), &known).unwrap();
        assert_eq!(load.reviews.len(), 2);
        assert!(load.reviews.iter().all(|r| r.poi_id == "p1"));
        assert_eq!(load.skipped.len(), 2);
        assert!(load.skipped.iter().all(|s| s.poi_id == "ghost"));
        assert_eq!(load.report.issues[0].kind, IssueKind::DuplicateKey);
    }

    fn factor_csv(rows: &[(&str, f64)]) -> String {
        let mut header = vec!["cbg_id".to_string()];
        header.extend(factor_names().iter().map(|s| s.to_string()));
        let mut s = header.join(",") + "\n";
        for (id, lum) in rows {
            let mut vals: Vec<String> = vec![id.to_string()];
            for (n, _) in FACTOR_COLUMNS.iter() {
                vals.push(if *n == "lum" {
                    lum.to_string()
                } else {
                    "60".into()
                });
            }
            s += &(vals.join(",") + "\n");
        }
        s
    }

    #[test]
    fn cbg_factor_table() {
        let csv = factor_csv(&[("a", 0.1), ("b", 0.2), ("c", 0.3), ("d", 0.4), ("e", 0.5)]);
        let load = read_cbg_factors(csv.as_bytes(), "f.csv").unwrap();
        assert_eq!(load.records.len(), 5);
        // race shares sum to 240 across columns; no cross-field rule applies
        assert!(load.report.is_empty());
        assert_eq!(load.records[2].get("lum"), Some(0.3));
    }

    #[test]
    fn cbg_lum_above_one_is_range_error() {
        let csv = factor_csv(&[("a", 1.3), ("b", 0.5)]);
        let load = read_cbg_factors(csv.as_bytes(), "f.csv").unwrap();
        assert_eq!(load.records.len(), 1);
        assert_eq!(load.report.issues[0].kind, IssueKind::Range);
        assert_eq!(load.report.issues[0].column.as_deref(), Some("lum"));
    }

    #[test]
    fn cbg_non_numeric_cell() {
        let csv = factor_csv(&[("a", 0.5)]).replace("a,60", "a,abc");
        let load = read_cbg_factors(csv.as_bytes(), "f.csv").unwrap();
        assert!(load.records.is_empty());
        let issue = &load.report.issues[0];
        assert_eq!((issue.kind, issue.row), (IssueKind::Parse, Some(1)));
        assert_eq!(issue.column.as_deref(), Some("pct_college"));
    }

    fn unit_square(id: &str) -> CbgPolygon {
        CbgPolygon {
            cbg_id: id.into(),
            rings: vec![vec![
                (0.0, 0.0),
                (1.0, 0.0),
                (1.0, 1.0),
                (0.0, 1.0),
                (0.0, 0.0),
            ]],
        }
    }

    fn poi_at(lon: f64, lat: f64) -> PointOfInterest {
        PointOfInterest {
            poi_id: "p".into(),
            name: "n".into(),
            latitude: lat,
            longitude: lon,
            naics_code: "7225".into(),
            cbg_id: None,
        }
    }

    #[test]
    fn point_in_polygon_cases() {
        let sq = [unit_square("sq")];
        assert_eq!(
            assign_cbg(&poi_at(0.5, 0.5), &sq).unwrap().as_deref(),
            Some("sq")
        );
        assert_eq!(assign_cbg(&poi_at(2.0, 2.0), &sq).unwrap(), None);
        assert_eq!(
            assign_cbg(&poi_at(1.0, 0.5), &sq).unwrap().as_deref(),
            Some("sq")
        );
        assert_eq!(
            assign_cbg(&poi_at(0.0, 0.0), &sq).unwrap().as_deref(),
            Some("sq")
        );
    }

    #[test]
    fn preassigned_and_errors() {
        let mut p = poi_at(5.0, 5.0);
        p.cbg_id = Some("given".into());
        assert_eq!(assign_cbg(&p, &[]).unwrap().as_deref(), Some("given"));
        assert!(matches!(
            assign_cbg(&poi_at(0.0, 0.0), &[]),
            Err(IngestError::NoPolygons)
        ));
        let bad = CbgPolygon {
            cbg_id: "bad".into(),
            rings: vec![vec![(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)]],
        };
        assert!(matches!(
            assign_cbg(&poi_at(0.2, 0.1), &[bad]),
            Err(IngestError::Geometry { .. })
        ));
    }

    #[test]
    fn hole_excluded_and_overlap_first_wins() {
        let mut donut = CbgPolygon {
            cbg_id: "donut".into(),
            rings: vec![vec![
                (0.0, 0.0),
                (4.0, 0.0),
                (4.0, 4.0),
                (0.0, 4.0),
                (0.0, 0.0),
            ]],
        };
        donut.rings.push(vec![
            (1.0, 1.0),
            (3.0, 1.0),
            (3.0, 3.0),
            (1.0, 3.0),
            (1.0, 1.0),
        ]);
        assert!(!donut.contains(2.0, 2.0));
        assert!(donut.contains(0.5, 2.0));
        let big = unit_square("first");
        let also = unit_square("second");
        assert_eq!(
            assign_cbg(&poi_at(0.5, 0.5), &[big, also])
                .unwrap()
                .as_deref(),
            Some("first")
        );
    }

    #[test]
    fn geojson_parse() {
        let json = r#"{"type":"FeatureCollection","features":[
          {"type":"Feature","properties":{"cbg_id":"130890001001"},
           "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
          {"type":"Feature","properties":{"cbg_id":42},
           "geometry":{"type":"MultiPolygon","coordinates":[[[[2,2],[3,2],[3,3],[2,2]]]]}}
        ]}"#;
        let polys = parse_cbg_polygons(json, "cbg.geojson").unwrap();
        assert_eq!(polys.len(), 2);
        assert_eq!(polys[1].cbg_id, "42");
        assert!(polys[1].contains(2.9, 2.5));
    }

    proptest! {
        #[test]
        fn poi_catalog_round_trip(
            rows in proptest::collection::btree_map(
                "[a-z0-9]{1,6}",
                ("[A-Za-z ,\"]{0,12}", -90.0f64..90.0, -180.0f64..180.0, "[0-9]{2,6}", proptest::option::of("[0-9]{3,12}")),
                1..8,
            )
        ) {
            let pois: Vec<PointOfInterest> = rows.into_iter().map(|(id, (name, lat, lon, naics, cbg))| PointOfInterest {
                poi_id: id, name: name.trim().to_string(), latitude: lat, longitude: lon, naics_code: naics, cbg_id: cbg,
            }).collect();
            let mut buf = Vec::new();
            write_poi_catalog(&mut buf, &pois).unwrap();
            let back = read_poi_catalog(buf.as_slice(), "mem").unwrap();
            prop_assert!(back.report.is_empty());
            prop_assert_eq!(back.pois, pois);
        }

        #[test]
        fn review_document_round_trip(
            items in proptest::collection::vec(("[a-z0-9]{1,5}", "\\PC{0,20}", 1u8..=5, 0u64..1000, "\\PC{0,40}"), 0..6)
        ) {
            let reviews: Vec<Review> = items.into_iter().map(|(id, author, rating, likes, text)| Review {
                review_id: id, poi_id: "p".into(), author, rating, likes, text: text.nfc().collect(),
            }).collect();
            let mut buf = Vec::new();
            write_review_document(&mut buf, &reviews).unwrap();
            let (back, report) = parse_review_document(std::str::from_utf8(&buf).unwrap(), "p", "mem").unwrap();
            prop_assert!(report.is_empty());
            prop_assert_eq!(back, reviews);
        }

        #[test]
        fn disjoint_polygon_order_irrelevant(x in -1.0f64..6.0, y in -1.0f64..2.0) {
            let shift = |id: &str, dx: f64| CbgPolygon {
                cbg_id: id.into(),
                rings: vec![vec![(dx, 0.0), (dx + 1.0, 0.0), (dx + 1.0, 1.0), (dx, 1.0), (dx, 0.0)]],
            };
            let a = vec![shift("a", 0.0), shift("b", 2.0), shift("c", 4.0)];
            let mut b = a.clone();
            b.reverse();
            let p = poi_at(x, y);
            prop_assert_eq!(assign_cbg(&p, &a).unwrap(), assign_cbg(&p, &b).unwrap());
        }
    }
}
