//! Intermediate CSV files. Each starts with a one-line comment naming the
//! artifact and its schema version, e.g. `# densitylens-schema: pois/1`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

pub const SCHEMA_PREFIX: &str = "# densitylens-schema:";

/// A named CSV artifact with a fixed column layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Artifact {
    pub name: &'static str,
    pub version: u32,
    pub file: &'static str,
    /// Stage (subcommand) that writes this artifact.
    pub producer: &'static str,
    pub columns: &'static [&'static str],
}

macro_rules! artifact {
    ($id:ident, $name:literal, $producer:literal, [$($col:literal),* $(,)?]) => {
        pub const $id: Artifact = Artifact {
            name: $name,
            version: 1,
            file: concat!($name, ".csv"),
            producer: $producer,
            columns: &[$($col),*],
        };
    };
}

artifact!(
    POIS,
    "pois",
    "ingest",
    [
        "poi_id",
        "name",
        "latitude",
        "longitude",
        "naics_code",
        "cbg_id"
    ]
);
artifact!(
    REVIEWS,
    "reviews",
    "ingest",
    ["review_id", "poi_id", "author", "rating", "likes", "text"]
);
artifact!(CBG_FACTORS, "cbg_factors", "ingest", []);
artifact!(
    VALIDATION_REPORT,
    "validation_report",
    "ingest",
    ["source", "row", "column", "kind", "message"]
);
artifact!(
    FLAGGED,
    "flagged_reviews",
    "filter",
    ["review_id", "poi_id", "n_matches", "matched_entries"]
);
artifact!(
    CLASSIFIED,
    "classified_reviews",
    "classify",
    [
        "review_id",
        "poi_id",
        "label",
        "score",
        "probability",
        "source"
    ]
);
artifact!(
    CLASSIFIER_METRICS,
    "classifier_metrics",
    "train",
    [
        "model",
        "params",
        "evaluation",
        "n",
        "accuracy",
        "macro_f1",
        "precision_true",
        "recall_true",
        "f1_true",
        "precision_false",
        "recall_false",
        "f1_false",
        "tp",
        "fp",
        "fn",
        "tn",
    ]
);
artifact!(
    CV_REPORT,
    "cv_report",
    "train",
    ["cell", "params", "fold", "accuracy", "macro_f1", "tp", "fp", "fn", "tn", "error",]
);
artifact!(
    SENTENCES,
    "sentences",
    "sentiment",
    [
        "review_id",
        "sentence_index",
        "density_related",
        "p_negative",
        "p_neutral",
        "p_positive",
        "label",
        "source",
        "text",
    ]
);
artifact!(
    REVIEW_SENTIMENT,
    "review_sentiment",
    "sentiment",
    [
        "review_id",
        "poi_id",
        "n_sentences",
        "n_density_sentences",
        "sentiment",
        "class",
    ]
);
artifact!(
    POI_SENTIMENT,
    "poi_sentiment",
    "aggregate",
    [
        "poi_id",
        "cbg_id",
        "latitude",
        "longitude",
        "naics_code",
        "naics_top2",
        "n_density_reviews",
        "mean_sentiment",
    ]
);
artifact!(
    CBG_SENTIMENT,
    "cbg_sentiment",
    "aggregate",
    ["cbg_id", "total_reviews", "n_pois", "weighted_mean"]
);
artifact!(
    NAICS_ROLLUP,
    "naics_rollup",
    "aggregate",
    ["level", "sector", "sector_name", "code", "count"]
);
artifact!(
    TESTS,
    "tests",
    "stats",
    ["level", "group_a", "group_b", "n_a", "n_b", "U", "p", "method"]
);
artifact!(
    CORRELATIONS,
    "correlations",
    "stats",
    ["factor", "n", "pearson", "note"]
);
artifact!(
    LSVA,
    "lsva",
    "lsva",
    [
        "naics_category",
        "rank",
        "word",
        "salience",
        "valence",
        "n_total",
        "n_positive",
        "n_negative",
    ]
);
artifact!(
    PLS_COEFFICIENTS,
    "pls_coefficients",
    "pls",
    [
        "variable",
        "Coeffs",
        "Std. err.",
        "t value",
        "P-value",
        "2.50%",
        "97.50%",
        "stars",
        "degenerate_variance",
    ]
);
artifact!(PLS_FITSTATS, "pls_fitstats", "pls", ["metric", "value"]);
artifact!(RMSEP_CURVE, "rmsep_curve", "pls", ["n_components", "rmsep"]);

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("missing upstream artifact {file}; run `{producer}` first")]
    Missing { file: String, producer: String },
    #[error("{file}: no schema header; expected `{expected}`")]
    NoHeader { file: String, expected: String },
    #[error(
        "{file}: stale artifact with schema `{found}`, expected `{expected}`; rerun `{producer}`"
    )]
    VersionMismatch {
        file: String,
        found: String,
        expected: String,
        producer: String,
    },
    #[error("{file}: missing column {column:?}")]
    MissingColumn { file: String, column: String },
    #[error("{file} row {row}: {message}")]
    Row {
        file: String,
        row: usize,
        message: String,
    },
    #[error("{file}: {message}")]
    Io { file: String, message: String },
}

impl Artifact {
    pub fn header_line(&self) -> String {
        format!("{SCHEMA_PREFIX} {}/{}", self.name, self.version)
    }

    pub fn path(&self, dir: &Path) -> std::path::PathBuf {
        dir.join(self.file)
    }

    /// Write `rows` under the schema comment and `columns` (or `header`, for
    /// artifacts whose columns are data-dependent).
    pub fn write<I, R>(
        &self,
        dir: &Path,
        header: Option<&[String]>,
        rows: I,
    ) -> Result<(), ArtifactError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator,
        R::Item: AsRef<[u8]>,
    {
        let path = self.path(dir);
        let io = |e: &dyn std::fmt::Display| ArtifactError::Io {
            file: self.file.to_string(),
            message: e.to_string(),
        };
        let mut buf = Vec::new();
        buf.extend_from_slice(self.header_line().as_bytes());
        buf.push(b'\n');
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            match header {
                Some(h) => w.write_record(h),
                None => w.write_record(self.columns),
            }
            .map_err(|e| io(&e))?;
            for r in rows {
                w.write_record(r).map_err(|e| io(&e))?;
            }
            w.flush().map_err(|e| io(&e))?;
        }
        fs::write(&path, buf).map_err(|e| io(&e))
    }

    /// Write an already formatted CSV body under the schema comment.
    pub fn write_raw(&self, dir: &Path, body: &[u8]) -> Result<(), ArtifactError> {
        let mut buf = self.header_line().into_bytes();
        buf.push(b'\n');
        buf.extend_from_slice(body);
        fs::write(self.path(dir), buf).map_err(|e| ArtifactError::Io {
            file: self.file.to_string(),
            message: e.to_string(),
        })
    }

    /// Read and check the schema header, returning the column header and
    /// the records.
    pub fn read(&self, dir: &Path) -> Result<Table, ArtifactError> {
        let path = self.path(dir);
        if !path.is_file() {
            return Err(ArtifactError::Missing {
                file: self.file.to_string(),
                producer: self.producer.to_string(),
            });
        }
        let text = fs::read_to_string(&path).map_err(|e| ArtifactError::Io {
            file: self.file.to_string(),
            message: e.to_string(),
        })?;
        self.parse(&text)
    }

    pub fn parse(&self, text: &str) -> Result<Table, ArtifactError> {
        let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
        let first = first.trim_end_matches('\r');
        let expected = self.header_line();
        let Some(found) = first.strip_prefix(SCHEMA_PREFIX) else {
            return Err(ArtifactError::NoHeader {
                file: self.file.to_string(),
                expected,
            });
        };
        if first != expected {
            return Err(ArtifactError::VersionMismatch {
                file: self.file.to_string(),
                found: found.trim().to_string(),
                expected: format!("{}/{}", self.name, self.version),
                producer: self.producer.to_string(),
            });
        }
        let mut rdr = csv::Reader::from_reader(rest.as_bytes());
        let row_err = |row: usize, e: csv::Error| ArtifactError::Row {
            file: self.file.to_string(),
            row,
            message: e.to_string(),
        };
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| row_err(0, e))?
            .iter()
            .map(str::to_string)
            .collect();
        for col in self.columns {
            if !headers.iter().any(|h| h == col) {
                return Err(ArtifactError::MissingColumn {
                    file: self.file.to_string(),
                    column: col.to_string(),
                });
            }
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| row_err(i + 1, e))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Table {
            file: self.file,
            headers,
            rows,
        })
    }
}

/// Records of an artifact with typed column access.
#[derive(Debug, Clone)]
pub struct Table {
    pub file: &'static str,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<usize, ArtifactError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ArtifactError::MissingColumn {
                file: self.file.to_string(),
                column: name.to_string(),
            })
    }

    /// Rows as maps from column name to cell.
    pub fn records(&self) -> impl Iterator<Item = Record<'_>> {
        self.rows.iter().enumerate().map(move |(i, r)| Record {
            table: self,
            row: i + 1,
            cells: r,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column name to index map.
    pub fn index(&self) -> BTreeMap<&str, usize> {
        self.headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.as_str(), i))
            .collect()
    }
}

pub struct Record<'a> {
    table: &'a Table,
    pub row: usize,
    cells: &'a [String],
}

impl<'a> Record<'a> {
    pub fn get(&self, column: &str) -> Result<&'a str, ArtifactError> {
        let i = self.table.column(column)?;
        Ok(self.cells.get(i).map(String::as_str).unwrap_or(""))
    }

    pub fn parse<T: std::str::FromStr>(&self, column: &str) -> Result<T, ArtifactError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get(column)?;
        raw.parse().map_err(|e: T::Err| ArtifactError::Row {
            file: self.table.file.to_string(),
            row: self.row,
            message: format!("column {column}: {raw:?}: {e}"),
        })
    }

    /// Empty cells read as `None`.
    pub fn parse_opt<T: std::str::FromStr>(&self, column: &str) -> Result<Option<T>, ArtifactError>
    where
        T::Err: std::fmt::Display,
    {
        if self.get(column)?.is_empty() {
            Ok(None)
        } else {
            self.parse(column).map(Some)
        }
    }
}

/// Shortest round-tripping decimal form; `NaN` for undefined values.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_header() {
        let dir = tempfile::tempdir().unwrap();
        CBG_SENTIMENT
            .write(dir.path(), None, [vec!["c1", "12", "2", "0.25"]])
            .unwrap();
        let text = fs::read_to_string(CBG_SENTIMENT.path(dir.path())).unwrap();
        assert!(text.starts_with("# densitylens-schema: cbg_sentiment/1\n"));
        let t = CBG_SENTIMENT.read(dir.path()).unwrap();
        assert_eq!(t.len(), 1);
        let rec = t.records().next().unwrap();
        assert_eq!(rec.parse::<f64>("weighted_mean").unwrap(), 0.25);
        assert_eq!(rec.get("cbg_id").unwrap(), "c1");
    }

    #[test]
    fn stale_version_is_an_explicit_error() {
        let text =
            "# densitylens-schema: cbg_sentiment/0\ncbg_id,total_reviews,n_pois,weighted_mean\n";
        let err = CBG_SENTIMENT.parse(text).unwrap_err();
        assert!(matches!(err, ArtifactError::VersionMismatch { .. }));
        assert!(err.to_string().contains("rerun `aggregate`"), "{err}");
    }

    #[test]
    fn wrong_artifact_and_missing_header() {
        let other = "# densitylens-schema: pois/1\ncbg_id,total_reviews,n_pois,weighted_mean\n";
        assert!(matches!(
            CBG_SENTIMENT.parse(other),
            Err(ArtifactError::VersionMismatch { .. })
        ));
        assert!(matches!(
            CBG_SENTIMENT.parse("cbg_id,total_reviews\n"),
            Err(ArtifactError::NoHeader { .. })
        ));
    }

    #[test]
    fn missing_file_names_the_producer() {
        let dir = tempfile::tempdir().unwrap();
        let err = FLAGGED.read(dir.path()).unwrap_err();
        assert!(err.to_string().contains("run `filter` first"), "{err}");
    }

    #[test]
    fn text_starting_with_hash_survives() {
        let dir = tempfile::tempdir().unwrap();
        REVIEWS
            .write(
                dir.path(),
                None,
                [vec!["#r1", "p", "a", "5", "0", "#1 spot\nin town"]],
            )
            .unwrap();
        let t = REVIEWS.read(dir.path()).unwrap();
        let rec = t.records().next().unwrap();
        assert_eq!(rec.get("review_id").unwrap(), "#r1");
        assert_eq!(rec.get("text").unwrap(), "#1 spot\nin town");
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-9, 1e21, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_opt(None), "");
    }
}
