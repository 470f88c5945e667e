//! Run configuration: a TOML file whose relative paths resolve against the
//! file's own directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use densitylens::aggregate::{DEFAULT_CBG_MIN_REVIEWS, DEFAULT_POI_MIN_REVIEWS};
use densitylens::classify::{ClassifierKind, ClassifierSpec, ParamValue};
use densitylens::sentiment::AggregationMode;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory. Left out of the manifest snapshot.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    pub inputs: Inputs,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub sentiment: SentimentConfig,
    #[serde(default)]
    pub stats: StatsConfig,
    #[serde(default)]
    pub pls: PlsConfig,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub poi_catalog: PathBuf,
    pub reviews_dir: PathBuf,
    pub cbg_factors: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cbg_polygons: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stoplist: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_predictions: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_scores: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// A POI is kept with at least this many scored reviews.
    pub poi_min_reviews: usize,
    /// A CBG is kept with strictly more than this many reviews.
    pub cbg_min_reviews: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            poi_min_reviews: DEFAULT_POI_MIN_REVIEWS,
            cbg_min_reviews: DEFAULT_CBG_MIN_REVIEWS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    /// `dt`, `rf`, `nb`, `svm`, `lr` or `external`.
    pub model: String,
    pub grid_search: bool,
    pub folds: usize,
    /// Hyperparameter overrides used when `grid_search` is off.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, ParamValue>,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            model: "lr".into(),
            grid_search: true,
            folds: 5,
            params: BTreeMap::new(),
        }
    }
}

impl ClassifyConfig {
    /// The in-process classifier kind, or `None` for external predictions.
    pub fn kind(&self) -> Result<Option<ClassifierKind>, String> {
        if self.model.eq_ignore_ascii_case("external") {
            return Ok(None);
        }
        self.model
            .parse::<ClassifierKind>()
            .map(Some)
            .map_err(|e| e.to_string())
    }

    /// Default hyperparameters with the configured overrides applied.
    pub fn fixed_spec(&self, kind: ClassifierKind, seed: u64) -> Result<ClassifierSpec, String> {
        let mut spec = ClassifierSpec::new(kind, seed);
        for (name, value) in &self.params {
            spec = spec.with(name, value.clone()).map_err(|e| e.to_string())?;
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentimentConfig {
    #[serde(default)]
    pub mode: AggregationMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    /// Words per LSVA table.
    pub lsva_top_k: usize,
    /// Number of largest NAICS sectors compared pairwise.
    pub top_sectors: usize,
    /// Minimum retained POIs for a 4-digit subcategory to be compared.
    pub min_subcategory_pois: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            lsva_top_k: 30,
            top_sectors: 4,
            min_subcategory_pois: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlsConfig {
    pub max_components: usize,
    pub folds: usize,
}

impl Default for PlsConfig {
    fn default() -> Self {
        PlsConfig {
            max_components: 10,
            folds: 10,
        }
    }
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError::Validation(message.into())
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| invalid(format!("config: {}", e.message())))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::parse(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn resolve_opt(&self, p: &Option<PathBuf>) -> Option<PathBuf> {
        p.as_deref().map(|p| self.resolve(p))
    }

    /// Output directory with `fallback` (usually the `--out` flag) taking
    /// precedence over the config value.
    pub fn out_dir(&self, fallback: Option<&Path>) -> Result<PathBuf, CliError> {
        match (fallback, &self.out) {
            (Some(p), _) => Ok(p.to_path_buf()),
            (None, Some(p)) => Ok(self.resolve(p)),
            (None, None) => Err(invalid("no output directory: set `out` or pass --out")),
        }
    }

    /// Check every referenced path and value before any stage runs.
    pub fn validate(&self) -> Result<(), CliError> {
        let need_file = |key: &str, p: &Path| {
            let full = self.resolve(p);
            if full.is_file() {
                Ok(())
            } else {
                Err(invalid(format!(
                    "inputs.{key}: file not found: {}",
                    full.display()
                )))
            }
        };
        need_file("poi_catalog", &self.inputs.poi_catalog)?;
        need_file("cbg_factors", &self.inputs.cbg_factors)?;
        let reviews = self.resolve(&self.inputs.reviews_dir);
        if !reviews.is_dir() {
            return Err(invalid(format!(
                "inputs.reviews_dir: directory not found: {}",
                reviews.display()
            )));
        }
        let optional = [
            ("cbg_polygons", &self.inputs.cbg_polygons),
            ("lexicon", &self.inputs.lexicon),
            ("stoplist", &self.inputs.stoplist),
            ("labels", &self.inputs.labels),
            ("external_predictions", &self.inputs.external_predictions),
            ("external_scores", &self.inputs.external_scores),
            ("grid", &self.inputs.grid),
        ];
        for (key, p) in optional {
            if let Some(p) = p {
                need_file(key, p)?;
            }
        }
        match self
            .classify
            .kind()
            .map_err(|e| invalid(format!("classify.model: {e}")))?
        {
            None => {
                if self.inputs.external_predictions.is_none() {
                    return Err(invalid(
                        "classify.model = \"external\" requires inputs.external_predictions",
                    ));
                }
            }
            Some(kind) => {
                if self.inputs.labels.is_none() {
                    return Err(invalid(format!(
                        "classify.model = {:?} requires inputs.labels",
                        self.classify.model
                    )));
                }
                self.classify
                    .fixed_spec(kind, self.seed)
                    .map_err(|e| invalid(format!("classify.params: {e}")))?;
            }
        }
        if self.classify.folds < 2 {
            return Err(invalid("classify.folds must be at least 2"));
        }
        if self.pls.folds < 2 {
            return Err(invalid("pls.folds must be at least 2"));
        }
        if self.pls.max_components == 0 {
            return Err(invalid("pls.max_components must be at least 1"));
        }
        if self.stats.lsva_top_k == 0 {
            return Err(invalid("stats.lsva_top_k must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [inputs]
        poi_catalog = "pois.csv"
        reviews_dir = "reviews"
        cbg_factors = "cbg_factors.csv"
        labels = "labels.csv"
    "#;

    #[test]
    fn defaults_apply() {
        let cfg = RunConfig::parse(MINIMAL, Path::new("/data")).unwrap();
        assert_eq!(cfg.thresholds.poi_min_reviews, 10);
        assert_eq!(cfg.thresholds.cbg_min_reviews, 10);
        assert_eq!(cfg.classify.model, "lr");
        assert_eq!(cfg.classify.folds, 5);
        assert_eq!(cfg.pls.max_components, 10);
        assert_eq!(cfg.pls.folds, 10);
        assert_eq!(cfg.sentiment.mode, AggregationMode::Label);
        assert_eq!(
            cfg.resolve(Path::new("pois.csv")),
            PathBuf::from("/data/pois.csv")
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[thresholds]\npoi_min = 3\n");
        assert!(matches!(
            RunConfig::parse(&text, Path::new(".")),
            Err(CliError::Validation(_))
        ));
    }

    #[test]
    fn negative_threshold_is_rejected() {
        let text = format!("{MINIMAL}\n[thresholds]\npoi_min_reviews = -1\n");
        assert!(RunConfig::parse(&text, Path::new(".")).is_err());
    }

    #[test]
    fn missing_reviews_dir_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["pois.csv", "cbg_factors.csv", "labels.csv"] {
            fs::write(dir.path().join(f), "x\n").unwrap();
        }
        let cfg = RunConfig::parse(MINIMAL, dir.path()).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("reviews_dir"), "{err}");
        fs::create_dir(dir.path().join("reviews")).unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn external_model_needs_predictions() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["pois.csv", "cbg_factors.csv", "labels.csv"] {
            fs::write(dir.path().join(f), "x\n").unwrap();
        }
        fs::create_dir(dir.path().join("reviews")).unwrap();
        let text = format!(
            "{MINIMAL}\n[classify]\nmodel = \"external\"\ngrid_search = false\nfolds = 5\n"
        );
        let cfg = RunConfig::parse(&text, dir.path()).unwrap();
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("external_predictions"));
    }

    #[test]
    fn fixed_params_are_validated() {
        let text = format!(
            "{MINIMAL}\n[classify]\nmodel = \"nb\"\ngrid_search = false\nfolds = 5\n[classify.params]\nalpha = 0.5\n"
        );
        let cfg = RunConfig::parse(&text, Path::new(".")).unwrap();
        let spec = cfg.classify.fixed_spec(ClassifierKind::Nb, 1).unwrap();
        assert_eq!(spec.params["alpha"], ParamValue::Float(0.5));
        let bad = format!(
            "{MINIMAL}\n[classify]\nmodel = \"nb\"\ngrid_search = false\nfolds = 5\n[classify.params]\ndepth = 3\n"
        );
        let cfg = RunConfig::parse(&bad, Path::new(".")).unwrap();
        assert!(cfg.classify.fixed_spec(ClassifierKind::Nb, 1).is_err());
    }
}
