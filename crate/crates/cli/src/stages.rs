//! One function per pipeline stage. Each reads its inputs from configured
//! files or upstream artifacts in the output directory and writes its own
//! artifacts there.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use densitylens::aggregate::{
    cbg_sentiment, naics_rollup, naics_sector, poi_sentiment, PoiSentiment, ScoredReview,
    NAICS_SECTORS, UNKNOWN_SECTOR,
};
use densitylens::classify::{
    evaluate, grid_search, kfold_cv, load_external_predictions, majority_baseline, parse_grids,
    predict, predict_labels, read_labels, train, ClassifierKind, ClassifierSpec, EvalMetrics,
    GridCell, Model, ParamGrid, Split,
};
use densitylens::ingest::{
    assign_cbg, factor_names, load_reviews, parse_cbg_polygons, read_cbg_factors, read_poi_catalog,
    IssueKind, PointOfInterest, Review, ValidationIssue, ValidationReport,
};
use densitylens::ontology::{filter_reviews, match_tokens, Lexicon, LexiconWarning, Stoplist};
use densitylens::pls::{goodness_of_fit, jackknife_pvalues, select_components, PlsModel};
use densitylens::seed;
use densitylens::sentiment::{
    label_from_triple, read_external_scores, resolve_triples, review_sentiment, SentenceKey,
    SentimentClass,
};
use densitylens::stats::{lsva, mann_whitney_u, pearson, zscore, zscore_vector, LsvaPoint};
use densitylens::textprep::{
    build_doc_term_matrix_from_tokens, segment_review, tokenize, Sentence, TfidfVectorizer,
};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::artifact::{self, fmt_f64, fmt_opt};
use crate::config::{PlsConfig, RunConfig};
use crate::manifest::StageRecord;

pub const MODEL_FILE: &str = "model.json";
pub const GEOJSON_FILE: &str = "poi_sentiment.geojson";

/// Everything a stage needs: the configuration, output directory and run
/// seed.
pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub out: PathBuf,
    pub seed: u64,
}

impl Context<'_> {
    /// Seed for a named stage, derived from the run seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        seed::for_label(self.seed, stage)
    }

    fn input(&self, p: &Path) -> PathBuf {
        self.config.resolve(p)
    }

    pub(crate) fn lexicon(&self, rec: &mut StageRecord) -> Result<Lexicon> {
        match self.config.resolve_opt(&self.config.inputs.lexicon) {
            None => {
                rec.set("lexicon", "bundled");
                Ok(Lexicon::bundled())
            }
            Some(path) => {
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let (lexicon, warnings) = Lexicon::parse(&text)
                    .with_context(|| format!("lexicon {}", file_name(&path)))?;
                for LexiconWarning::Duplicate { line, entry } in warnings {
                    rec.warnings.push(format!(
                        "lexicon line {line}: duplicate entry {entry:?} ignored"
                    ));
                }
                rec.set("lexicon", file_name(&path));
                Ok(lexicon)
            }
        }
    }

    pub(crate) fn stoplist(&self) -> Result<Stoplist> {
        match self.config.resolve_opt(&self.config.inputs.stoplist) {
            None => Ok(Stoplist::bundled()),
            Some(path) => Ok(Stoplist::parse(
                &fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?,
            )),
        }
    }
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

fn open(p: &Path) -> Result<File> {
    File::open(p).with_context(|| format!("opening {}", p.display()))
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => bail!("expected True or False, found {other:?}"),
    }
}

// ------------------------------------------------------------ artifact readers

pub fn read_pois(dir: &Path) -> Result<Vec<PointOfInterest>> {
    let t = artifact::POIS.read(dir)?;
    t.records()
        .map(|r| {
            let cbg = r.get("cbg_id")?;
            Ok(PointOfInterest {
                poi_id: r.get("poi_id")?.to_string(),
                name: r.get("name")?.to_string(),
                latitude: r.parse("latitude")?,
                longitude: r.parse("longitude")?,
                naics_code: r.get("naics_code")?.to_string(),
                cbg_id: (!cbg.is_empty()).then(|| cbg.to_string()),
            })
        })
        .collect()
}

pub fn read_reviews(dir: &Path) -> Result<Vec<Review>> {
    let t = artifact::REVIEWS.read(dir)?;
    t.records()
        .map(|r| {
            Ok(Review {
                review_id: r.get("review_id")?.to_string(),
                poi_id: r.get("poi_id")?.to_string(),
                author: r.get("author")?.to_string(),
                rating: r.parse("rating")?,
                likes: r.parse("likes")?,
                text: r.get("text")?.to_string(),
            })
        })
        .collect()
}

/// `(review_id, poi_id)` of the flagged reviews.
pub fn read_flagged(dir: &Path) -> Result<Vec<(String, String)>> {
    let t = artifact::FLAGGED.read(dir)?;
    t.records()
        .map(|r| {
            Ok((
                r.get("review_id")?.to_string(),
                r.get("poi_id")?.to_string(),
            ))
        })
        .collect()
}

pub fn read_scored(dir: &Path) -> Result<Vec<ScoredReview>> {
    let t = artifact::REVIEW_SENTIMENT.read(dir)?;
    t.records()
        .map(|r| {
            Ok(ScoredReview {
                review_id: r.get("review_id")?.to_string(),
                poi_id: r.get("poi_id")?.to_string(),
                sentiment: r.parse("sentiment")?,
            })
        })
        .collect()
}

pub fn read_poi_sentiment(dir: &Path) -> Result<Vec<PoiSentiment>> {
    let t = artifact::POI_SENTIMENT.read(dir)?;
    t.records()
        .map(|r| {
            let cbg = r.get("cbg_id")?;
            Ok(PoiSentiment {
                poi_id: r.get("poi_id")?.to_string(),
                cbg_id: (!cbg.is_empty()).then(|| cbg.to_string()),
                latitude: r.parse("latitude")?,
                longitude: r.parse("longitude")?,
                naics_code: r.get("naics_code")?.to_string(),
                naics_top2: r.get("naics_top2")?.to_string(),
                n_density_reviews: r.parse("n_density_reviews")?,
                mean_sentiment: r.parse("mean_sentiment")?,
            })
        })
        .collect()
}

/// CBG id to `(total_reviews, weighted_mean)`.
pub fn read_cbg_sentiment(dir: &Path) -> Result<BTreeMap<String, (usize, f64)>> {
    let t = artifact::CBG_SENTIMENT.read(dir)?;
    t.records()
        .map(|r| {
            Ok((
                r.get("cbg_id")?.to_string(),
                (r.parse("total_reviews")?, r.parse("weighted_mean")?),
            ))
        })
        .collect()
}

/// Factor column names and CBG id to factor values.
pub fn read_factor_table(dir: &Path) -> Result<(Vec<String>, BTreeMap<String, Vec<f64>>)> {
    let t = artifact::CBG_FACTORS.read(dir)?;
    let id = t.column("cbg_id")?;
    let names: Vec<String> = t
        .headers
        .iter()
        .filter(|h| *h != "cbg_id")
        .cloned()
        .collect();
    let cols: Vec<usize> = names
        .iter()
        .map(|n| t.column(n))
        .collect::<Result<_, _>>()?;
    let mut out = BTreeMap::new();
    for (i, row) in t.rows.iter().enumerate() {
        let values = cols
            .iter()
            .map(|&c| {
                row[c]
                    .parse::<f64>()
                    .map_err(|e| anyhow!("{} row {}: {}: {e}", t.file, i + 1, t.headers[c]))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.insert(row[id].clone(), values);
    }
    Ok((names, out))
}

// ---------------------------------------------------------------------- ingest

pub fn ingest(ctx: &Context) -> Result<StageRecord> {
    let inputs = &ctx.config.inputs;
    let mut rec = StageRecord::new("ingest", "reviews");

    let poi_path = ctx.input(&inputs.poi_catalog);
    let poi_load = read_poi_catalog(open(&poi_path)?, &file_name(&poi_path))?;
    let mut report = ValidationReport::default();
    rec.count("poi_rows_rejected", poi_load.report.len());
    report.extend(poi_load.report);
    let mut pois = poi_load.pois;

    let polygons = match ctx.config.resolve_opt(&inputs.cbg_polygons) {
        Some(p) => {
            let text =
                fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            parse_cbg_polygons(&text, &file_name(&p))?
        }
        None => Vec::new(),
    };
    rec.count("polygons", polygons.len());
    let mut assigned = 0;
    for p in &mut pois {
        if p.cbg_id.is_none() && !polygons.is_empty() {
            p.cbg_id = assign_cbg(p, &polygons).with_context(|| format!("poi {}", p.poi_id))?;
            if p.cbg_id.is_some() {
                assigned += 1;
            }
        }
    }
    rec.count("pois", pois.len());
    rec.count("pois_assigned_by_polygon", assigned);
    let without_cbg = pois.iter().filter(|p| p.cbg_id.is_none()).count();
    rec.count("pois_without_cbg", without_cbg);
    if without_cbg > 0 {
        rec.warnings.push(format!("{without_cbg} POIs have no CBG"));
    }

    let known: BTreeSet<String> = pois.iter().map(|p| p.poi_id.clone()).collect();
    let reviews_dir = ctx.input(&inputs.reviews_dir);
    let load = load_reviews(&reviews_dir, &known)?;
    let duplicates = load
        .report
        .issues
        .iter()
        .filter(|i| i.kind == IssueKind::DuplicateKey)
        .count();
    let invalid = load.report.len() - duplicates;
    rec.rows_in = load.reviews.len() + load.skipped.len() + load.report.len();
    rec.rows_out = load.reviews.len();
    rec.drop("invalid_review", invalid);
    rec.drop("duplicate_review_id", duplicates);
    rec.drop("unknown_poi", load.skipped.len());
    report.extend(load.report);
    for s in &load.skipped {
        report.issues.push(ValidationIssue {
            source: format!("{}.json", s.poi_id),
            row: None,
            column: Some("poi_id".into()),
            kind: IssueKind::UnknownKey,
            message: format!("{} ({})", s.reason, s.review_id),
        });
    }

    let cbg_path = ctx.input(&inputs.cbg_factors);
    let cbg = read_cbg_factors(open(&cbg_path)?, &file_name(&cbg_path))?;
    rec.count("cbgs", cbg.records.len());
    rec.count("cbg_rows_rejected", cbg.report.len());
    report.extend(cbg.report);

    let dir = &ctx.out;
    artifact::POIS.write(
        dir,
        None,
        pois.iter().map(|p| {
            vec![
                p.poi_id.clone(),
                p.name.clone(),
                fmt_f64(p.latitude),
                fmt_f64(p.longitude),
                p.naics_code.clone(),
                p.cbg_id.clone().unwrap_or_default(),
            ]
        }),
    )?;
    artifact::REVIEWS.write(
        dir,
        None,
        load.reviews.iter().map(|r| {
            vec![
                r.review_id.clone(),
                r.poi_id.clone(),
                r.author.clone(),
                r.rating.to_string(),
                r.likes.to_string(),
                r.text.clone(),
            ]
        }),
    )?;
    let mut header = vec!["cbg_id".to_string()];
    header.extend(factor_names().iter().map(|s| s.to_string()));
    artifact::CBG_FACTORS.write(
        dir,
        Some(&header),
        cbg.records.iter().map(|c| {
            std::iter::once(c.cbg_id.clone())
                .chain(c.values.iter().map(|v| fmt_f64(*v)))
                .collect::<Vec<_>>()
        }),
    )?;
    let mut body = Vec::new();
    report.write_csv(&mut body)?;
    artifact::VALIDATION_REPORT.write_raw(dir, &body)?;
    rec.count("validation_issues", report.len());
    for a in [
        artifact::POIS,
        artifact::REVIEWS,
        artifact::CBG_FACTORS,
        artifact::VALIDATION_REPORT,
    ] {
        rec.output(a.file);
    }
    Ok(rec)
}

// ---------------------------------------------------------------------- filter

pub fn filter(ctx: &Context) -> Result<StageRecord> {
    let mut rec = StageRecord::new("filter", "reviews");
    let reviews = read_reviews(&ctx.out)?;
    let lexicon = ctx.lexicon(&mut rec)?;
    rec.count("lexicon_entries", lexicon.len());
    let flagged = filter_reviews(&reviews, &lexicon);
    rec.rows_in = reviews.len();
    rec.rows_out = flagged.len();
    rec.drop("no_lexicon_match", reviews.len() - flagged.len());
    artifact::FLAGGED.write(
        &ctx.out,
        None,
        flagged.iter().map(|f| {
            vec![
                f.review_id.clone(),
                f.poi_id.clone(),
                f.matches.len().to_string(),
                f.matched_entries().join("|"),
            ]
        }),
    )?;
    rec.output(artifact::FLAGGED.file);
    Ok(rec)
}

// ------------------------------------------------------------------- classify

/// Persisted classifier: fitted TF-IDF weights plus the trained model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBundle {
    pub vectorizer: TfidfVectorizer,
    pub model: Model,
    pub grid_cells: usize,
    pub selected_cell: Option<usize>,
    pub cv_mean_accuracy: f64,
}

fn texts_by_id(reviews: &[Review]) -> BTreeMap<&str, &str> {
    reviews
        .iter()
        .map(|r| (r.review_id.as_str(), r.text.as_str()))
        .collect()
}

fn metric_row(model: &str, params: &str, evaluation: &str, m: &EvalMetrics) -> Vec<String> {
    vec![
        model.to_string(),
        params.to_string(),
        evaluation.to_string(),
        m.total().to_string(),
        fmt_f64(m.accuracy),
        fmt_f64(m.macro_f1()),
        fmt_f64(m.positive.precision),
        fmt_f64(m.positive.recall),
        fmt_f64(m.positive.f1),
        fmt_f64(m.negative.precision),
        fmt_f64(m.negative.recall),
        fmt_f64(m.negative.f1),
        m.tp.to_string(),
        m.fp.to_string(),
        m.fn_.to_string(),
        m.tn.to_string(),
    ]
}

fn cv_rows(cells: &[GridCell]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for c in cells {
        let params = c.spec.params_string();
        if let Some(err) = &c.error {
            rows.push(vec![
                c.index.to_string(),
                params,
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                err.clone(),
            ]);
            continue;
        }
        for (f, m) in c.fold_metrics.iter().enumerate() {
            rows.push(vec![
                c.index.to_string(),
                params.clone(),
                f.to_string(),
                fmt_f64(m.accuracy),
                fmt_f64(m.macro_f1()),
                m.tp.to_string(),
                m.fp.to_string(),
                m.fn_.to_string(),
                m.tn.to_string(),
                String::new(),
            ]);
        }
    }
    rows
}

/// The configured grid for `kind`: from the grid file when given, bundled
/// otherwise.
fn grid_for(ctx: &Context, kind: ClassifierKind) -> Result<ParamGrid> {
    match ctx.config.resolve_opt(&ctx.config.inputs.grid) {
        None => Ok(ParamGrid::bundled(kind)),
        Some(p) => {
            let text =
                fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            parse_grids(&text)
                .with_context(|| format!("grid file {}", file_name(&p)))?
                .into_iter()
                .find(|g| g.kind == kind)
                .ok_or_else(|| {
                    anyhow!(
                        "grid file {} has no [{}] table",
                        file_name(&p),
                        kind.as_str()
                    )
                })
        }
    }
}

/// Fit TF-IDF and the configured classifier on the labeled training split.
pub fn train_stage(ctx: &Context) -> Result<StageRecord> {
    let cfg = &ctx.config.classify;
    let Some(kind) = cfg.kind().map_err(|e| anyhow!(e))? else {
        bail!("classify.model is \"external\"; there is nothing to train");
    };
    let mut rec = StageRecord::new("train", "labels");
    let labels_path = ctx
        .config
        .resolve_opt(&ctx.config.inputs.labels)
        .ok_or_else(|| anyhow!("inputs.labels is required to train"))?;
    let (labels, label_report) = read_labels(open(&labels_path)?, &file_name(&labels_path))?;
    for issue in &label_report.issues {
        rec.warnings.push(format!(
            "{} row {}: {}",
            issue.source,
            issue.row.unwrap_or(0),
            issue.message
        ));
    }
    let reviews = read_reviews(&ctx.out)?;
    let texts = texts_by_id(&reviews);
    rec.rows_in = labels.len() + label_report.len();
    rec.drop("invalid_label_row", label_report.len());

    let split_docs = |split: Split| -> (Vec<(String, Vec<String>)>, Vec<bool>) {
        let mut docs = Vec::new();
        let mut y = Vec::new();
        for i in labels.indices(split) {
            if let Some(text) = texts.get(labels.doc_ids[i].as_str()) {
                docs.push((labels.doc_ids[i].clone(), tokenize(text)));
                y.push(labels.labels[i]);
            }
        }
        (docs, y)
    };
    let (train_docs, y_train) = split_docs(Split::Train);
    let (test_docs, y_test) = split_docs(Split::Test);
    let used = train_docs.len() + test_docs.len();
    rec.drop("label_not_in_reviews", labels.len() - used);
    rec.rows_out = used;
    rec.count("train", train_docs.len());
    rec.count("test", test_docs.len());
    rec.count("train_true", y_train.iter().filter(|b| **b).count());
    rec.count("train_false", y_train.iter().filter(|b| !**b).count());

    let dtm = build_doc_term_matrix_from_tokens(&train_docs, 1)?;
    let vectorizer = TfidfVectorizer::fit(&dtm);
    let x_train = vectorizer.transform(&dtm);
    rec.count("vocabulary", vectorizer.vocabulary.len());

    let seed = ctx.stage_seed("classify");
    let (spec, cells, selected): (ClassifierSpec, Vec<GridCell>, Option<usize>) = if cfg.grid_search
    {
        let grid = grid_for(ctx, kind)?;
        let res = grid_search(&grid, &x_train, &y_train, cfg.folds, seed)?;
        let failed = res.cells.iter().filter(|c| c.error.is_some()).count();
        if failed > 0 {
            rec.warnings
                .push(format!("{failed} grid cells failed to train"));
        }
        (res.best.clone(), res.cells, Some(res.best_index))
    } else {
        let spec = cfg.fixed_spec(kind, seed).map_err(|e| anyhow!(e))?;
        let cv = kfold_cv(&spec, &x_train, &y_train, cfg.folds, seed)?;
        let cell = GridCell {
            index: 0,
            spec: spec.clone(),
            mean_accuracy: Some(cv.mean_accuracy),
            mean_macro_f1: Some(cv.mean_macro_f1),
            fold_metrics: cv.fold_metrics,
            error: None,
        };
        (spec, vec![cell], None)
    };
    let chosen = &cells[selected.unwrap_or(0)];
    let cv_mean_accuracy = chosen.mean_accuracy.unwrap_or(f64::NAN);
    rec.set("model", kind.as_str());
    rec.set("params", spec.params_string());
    rec.set("grid_search", cfg.grid_search);
    rec.count("grid_cells", cells.len());

    let model = train(&spec, &x_train, &y_train)?;
    let params = spec.params_string();
    let mut metrics = Vec::new();
    let refit = evaluate(&predict_labels(&model, &x_train)?, &y_train)?;
    metrics.push(metric_row(kind.as_str(), &params, "train_refit", &refit));
    let mut cv_row = vec![
        kind.as_str().to_string(),
        params.clone(),
        "cv_mean".to_string(),
        y_train.len().to_string(),
        fmt_opt(chosen.mean_accuracy),
        fmt_opt(chosen.mean_macro_f1),
    ];
    cv_row.extend(std::iter::repeat_n(String::new(), 10));
    metrics.push(cv_row);
    if !test_docs.is_empty() {
        let x_test = vectorizer.transform_tokens(&test_docs);
        let test = evaluate(&predict_labels(&model, &x_test)?, &y_test)?;
        metrics.push(metric_row(kind.as_str(), &params, "test", &test));
        let base = evaluate(&majority_baseline(&y_train, y_test.len()), &y_test)?;
        metrics.push(metric_row("majority", "", "test", &base));
    }
    artifact::CLASSIFIER_METRICS.write(&ctx.out, None, metrics)?;
    artifact::CV_REPORT.write(&ctx.out, None, cv_rows(&cells))?;
    let bundle = ModelBundle {
        vectorizer,
        model,
        grid_cells: cells.len(),
        selected_cell: selected,
        cv_mean_accuracy,
    };
    let mut json = serde_json::to_string_pretty(&bundle)?;
    json.push('\n');
    fs::write(ctx.out.join(MODEL_FILE), json).context("writing model.json")?;
    rec.output(artifact::CLASSIFIER_METRICS.file);
    rec.output(artifact::CV_REPORT.file);
    rec.output(MODEL_FILE);
    Ok(rec)
}

/// Label every flagged review with the trained model or external predictions.
pub fn classify_stage(ctx: &Context) -> Result<StageRecord> {
    let mut rec = StageRecord::new("classify", "reviews");
    let flagged = read_flagged(&ctx.out)?;
    rec.rows_in = flagged.len();
    let mut rows = Vec::new();
    match ctx.config.classify.kind().map_err(|e| anyhow!(e))? {
        Some(_) => {
            let path = ctx.out.join(MODEL_FILE);
            if !path.is_file() {
                bail!("missing upstream artifact {MODEL_FILE}; run `train` first");
            }
            let bundle: ModelBundle = serde_json::from_str(&fs::read_to_string(&path)?)
                .with_context(|| format!("{MODEL_FILE} is unreadable or stale; rerun `train`"))?;
            let reviews = read_reviews(&ctx.out)?;
            let texts = texts_by_id(&reviews);
            let docs = flagged
                .iter()
                .map(|(id, _)| {
                    texts
                        .get(id.as_str())
                        .map(|t| (id.clone(), tokenize(t)))
                        .ok_or_else(|| {
                            anyhow!("flagged review {id} missing from reviews.csv; rerun `filter`")
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            let x = bundle.vectorizer.transform_tokens(&docs);
            let preds = predict(&bundle.model, &x)?;
            rec.set("source", "model");
            rec.set("model", bundle.model.spec.kind.as_str());
            for ((id, poi), p) in flagged.iter().zip(&preds) {
                rows.push(vec![
                    id.clone(),
                    poi.clone(),
                    bool_str(p.label).to_string(),
                    fmt_f64(p.score),
                    fmt_opt(p.probability),
                    "model".to_string(),
                ]);
            }
        }
        None => {
            let path = ctx
                .config
                .resolve_opt(&ctx.config.inputs.external_predictions)
                .ok_or_else(|| anyhow!("inputs.external_predictions is required"))?;
            let known: BTreeSet<String> = flagged.iter().map(|(id, _)| id.clone()).collect();
            let ext = load_external_predictions(open(&path)?, &file_name(&path), Some(&known))?;
            rec.set("source", "external");
            if !ext.report.is_empty() {
                rec.warnings.push(format!(
                    "{} external prediction rows rejected",
                    ext.report.len()
                ));
            }
            if !ext.skipped.is_empty() {
                rec.warnings.push(format!(
                    "{} external predictions refer to reviews that were not flagged",
                    ext.skipped.len()
                ));
            }
            let mut missing = 0;
            for (id, poi) in &flagged {
                let Some(&p) = ext.prob_true.get(id) else {
                    missing += 1;
                    continue;
                };
                rows.push(vec![
                    id.clone(),
                    poi.clone(),
                    bool_str(densitylens::classify::external_label(p)).to_string(),
                    fmt_f64(p),
                    fmt_f64(p),
                    "external".to_string(),
                ]);
            }
            rec.drop("missing_prediction", missing);
        }
    }
    rec.rows_out = rows.len();
    let n_true = rows.iter().filter(|r| r[2] == "True").count();
    rec.count("true", n_true);
    rec.count("false", rows.len() - n_true);
    artifact::CLASSIFIED.write(&ctx.out, None, rows)?;
    rec.output(artifact::CLASSIFIED.file);
    Ok(rec)
}

// ------------------------------------------------------------------ sentiment

pub fn sentiment(ctx: &Context) -> Result<StageRecord> {
    let mut rec = StageRecord::new("sentiment", "reviews");
    let t = artifact::CLASSIFIED.read(&ctx.out)?;
    let mut kept = Vec::new();
    for r in t.records() {
        if parse_bool(r.get("label")?).with_context(|| format!("{} row {}", t.file, r.row))? {
            kept.push((
                r.get("review_id")?.to_string(),
                r.get("poi_id")?.to_string(),
            ));
        }
    }
    rec.rows_in = t.len();
    rec.drop("classified_false", t.len() - kept.len());

    let reviews = read_reviews(&ctx.out)?;
    let texts = texts_by_id(&reviews);
    let lexicon = ctx.lexicon(&mut rec)?;
    let mode = ctx.config.sentiment.mode;
    rec.set("mode", mode.as_str());

    let mut sentences: Vec<Sentence> = Vec::new();
    let mut spans = Vec::with_capacity(kept.len());
    for (id, _) in &kept {
        let text = texts
            .get(id.as_str())
            .ok_or_else(|| anyhow!("classified review {id} missing from reviews.csv"))?;
        let start = sentences.len();
        for mut s in segment_review(id, text) {
            s.density_related = !match_tokens(id, &tokenize(&s.text), &lexicon).is_empty();
            sentences.push(s);
        }
        spans.push(start..sentences.len());
    }

    let external = match ctx.config.resolve_opt(&ctx.config.inputs.external_scores) {
        None => None,
        Some(path) => {
            let known: BTreeSet<SentenceKey> = sentences
                .iter()
                .map(|s| (s.review_id.clone(), s.index))
                .collect();
            let ext = read_external_scores(open(&path)?, &file_name(&path), Some(&known))?;
            if !ext.report.is_empty() {
                rec.warnings
                    .push(format!("{} external score rows rejected", ext.report.len()));
            }
            rec.count("external_scores_skipped", ext.skipped.len());
            Some(ext.triples)
        }
    };
    rec.set(
        "scores",
        if external.is_some() {
            "external+lexicon"
        } else {
            "lexicon"
        },
    );
    let (resolved, fallbacks) = resolve_triples(&sentences, external.as_ref());
    if external.is_some() {
        rec.count("lexicon_fallbacks", fallbacks);
        if fallbacks > 0 {
            rec.warnings.push(format!(
                "{fallbacks} sentences had no external score and used the lexicon scorer"
            ));
        }
    }

    let mut sentence_rows = Vec::with_capacity(sentences.len());
    for (s, (t, src)) in sentences.iter().zip(&resolved) {
        sentence_rows.push(vec![
            s.review_id.clone(),
            s.index.to_string(),
            bool_str(s.density_related).to_string(),
            fmt_f64(t.p_negative),
            fmt_f64(t.p_neutral),
            fmt_f64(t.p_positive),
            label_from_triple(t)?.as_str().to_string(),
            src.as_str().to_string(),
            s.text.clone(),
        ]);
    }
    let triples: Vec<_> = resolved.iter().map(|(t, _)| *t).collect();
    let mut review_rows = Vec::new();
    let mut not_applicable = 0;
    for ((id, poi), span) in kept.iter().zip(spans) {
        let n_density = sentences[span.clone()]
            .iter()
            .filter(|s| s.density_related)
            .count();
        match review_sentiment(&sentences[span.clone()], &triples[span.clone()], mode) {
            Some(v) => review_rows.push(vec![
                id.clone(),
                poi.clone(),
                span.len().to_string(),
                n_density.to_string(),
                fmt_f64(v),
                SentimentClass::from_sign(v).as_str().to_string(),
            ]),
            None => not_applicable += 1,
        }
    }
    rec.drop("no_density_sentence", not_applicable);
    rec.rows_out = review_rows.len();
    rec.count("sentences", sentences.len());
    rec.count(
        "density_sentences",
        sentences.iter().filter(|s| s.density_related).count(),
    );
    artifact::SENTENCES.write(&ctx.out, None, sentence_rows)?;
    artifact::REVIEW_SENTIMENT.write(&ctx.out, None, review_rows)?;
    rec.output(artifact::SENTENCES.file);
    rec.output(artifact::REVIEW_SENTIMENT.file);
    Ok(rec)
}

// ------------------------------------------------------------------ aggregate

fn sector_name(key: &str) -> &'static str {
    NAICS_SECTORS
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, n)| *n)
        .unwrap_or(UNKNOWN_SECTOR)
}

fn sector_key(code: &str) -> String {
    naics_sector(code)
        .map(|(k, _)| k.to_string())
        .unwrap_or_else(|| UNKNOWN_SECTOR.to_string())
}

pub fn aggregate(ctx: &Context) -> Result<StageRecord> {
    let mut rec = StageRecord::new("aggregate", "reviews");
    let scored = read_scored(&ctx.out)?;
    let pois = read_pois(&ctx.out)?;
    let th = &ctx.config.thresholds;
    rec.set("poi_min_reviews", th.poi_min_reviews);
    rec.set("cbg_min_reviews_exclusive", th.cbg_min_reviews);
    let poi_roll = poi_sentiment(&scored, &pois, th.poi_min_reviews);
    let kept: usize = poi_roll.retained.iter().map(|p| p.n_density_reviews).sum();
    rec.rows_in = scored.len();
    rec.rows_out = kept;
    rec.drop("orphan_review", poi_roll.orphan_reviews);
    rec.drop(
        "below_poi_threshold",
        scored.len() - poi_roll.orphan_reviews - kept,
    );
    let cbg_roll = cbg_sentiment(&poi_roll.retained, th.cbg_min_reviews);
    rec.count("pois_retained", poi_roll.retained.len());
    rec.count("pois_below_threshold", poi_roll.dropped_below_threshold);
    rec.count("pois_without_cbg", cbg_roll.unassigned_pois);
    rec.count("cbgs_retained", cbg_roll.retained.len());
    rec.count("cbgs_below_threshold", cbg_roll.dropped_below_threshold);
    let naics = naics_rollup(poi_roll.retained.iter().map(|p| p.naics_code.as_str()));

    artifact::POI_SENTIMENT.write(
        &ctx.out,
        None,
        poi_roll.retained.iter().map(|p| {
            vec![
                p.poi_id.clone(),
                p.cbg_id.clone().unwrap_or_default(),
                fmt_f64(p.latitude),
                fmt_f64(p.longitude),
                p.naics_code.clone(),
                p.naics_top2.clone(),
                p.n_density_reviews.to_string(),
                fmt_f64(p.mean_sentiment),
            ]
        }),
    )?;
    artifact::CBG_SENTIMENT.write(
        &ctx.out,
        None,
        cbg_roll.retained.iter().map(|c| {
            vec![
                c.cbg_id.clone(),
                c.total_reviews.to_string(),
                c.n_pois.to_string(),
                fmt_f64(c.weighted_mean),
            ]
        }),
    )?;
    let mut naics_rows = Vec::new();
    for (sector, n) in &naics.sectors {
        naics_rows.push(vec![
            "sector".to_string(),
            sector.clone(),
            sector_name(sector).to_string(),
            String::new(),
            n.to_string(),
        ]);
    }
    for (sector, subs) in &naics.subcategories {
        for (code, n) in subs {
            naics_rows.push(vec![
                "subcategory".to_string(),
                sector.clone(),
                sector_name(sector).to_string(),
                code.clone(),
                n.to_string(),
            ]);
        }
    }
    artifact::NAICS_ROLLUP.write(&ctx.out, None, naics_rows)?;
    let features: Vec<serde_json::Value> = poi_roll
        .retained
        .iter()
        .map(|p| {
            serde_json::json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [p.longitude, p.latitude]},
                "properties": {
                    "poi_id": p.poi_id,
                    "cbg_id": p.cbg_id,
                    "naics_code": p.naics_code,
                    "n_density_reviews": p.n_density_reviews,
                    "mean_sentiment": p.mean_sentiment,
                },
            })
        })
        .collect();
    let geo = serde_json::json!({"type": "FeatureCollection", "features": features});
    let mut text = serde_json::to_string_pretty(&geo)?;
    text.push('\n');
    fs::write(ctx.out.join(GEOJSON_FILE), text).context("writing poi_sentiment.geojson")?;
    for f in [
        artifact::POI_SENTIMENT.file,
        artifact::CBG_SENTIMENT.file,
        artifact::NAICS_ROLLUP.file,
        GEOJSON_FILE,
    ] {
        rec.output(f);
    }
    Ok(rec)
}

// ---------------------------------------------------------------------- stats

/// Groups ordered by size (descending), then key.
fn ranked_groups(groups: BTreeMap<String, Vec<f64>>) -> Vec<(String, Vec<f64>)> {
    let mut v: Vec<(String, Vec<f64>)> = groups.into_iter().collect();
    v.sort_by_key(|e| std::cmp::Reverse(e.1.len()));
    v
}

fn pairwise_tests(level: &str, groups: &[(String, Vec<f64>)], rows: &mut Vec<Vec<String>>) {
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let (a, xa) = &groups[i];
            let (b, xb) = &groups[j];
            let mut row = vec![
                level.to_string(),
                a.clone(),
                b.clone(),
                xa.len().to_string(),
                xb.len().to_string(),
            ];
            match mann_whitney_u(xa, xb) {
                Ok(t) => row.extend([
                    fmt_f64(t.statistic),
                    fmt_f64(t.p_value),
                    t.method.as_str().to_string(),
                ]),
                Err(e) => row.extend([String::new(), String::new(), format!("not computed: {e}")]),
            }
            rows.push(row);
        }
    }
}

/// Mann-Whitney comparisons of POI mean sentiment between the largest
/// sectors and between well-populated 4-digit subcategories.
pub fn category_tests(
    pois: &[PoiSentiment],
    top_sectors: usize,
    min_subcategory: usize,
) -> Vec<Vec<String>> {
    let mut sectors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut subs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for p in pois {
        let Some((key, _)) = naics_sector(&p.naics_code) else {
            continue;
        };
        sectors
            .entry(key.to_string())
            .or_default()
            .push(p.mean_sentiment);
        if p.naics_code.len() >= 4 {
            subs.entry(p.naics_code[..4].to_string())
                .or_default()
                .push(p.mean_sentiment);
        }
    }
    let mut sectors = ranked_groups(sectors);
    sectors.truncate(top_sectors);
    let subs: Vec<_> = ranked_groups(subs)
        .into_iter()
        .filter(|(_, v)| v.len() >= min_subcategory)
        .collect();
    let mut rows = Vec::new();
    pairwise_tests("sector", &sectors, &mut rows);
    pairwise_tests("subcategory", &subs, &mut rows);
    rows
}

/// LSVA tables over the scored reviews: all reviews, then one per NAICS
/// sector of the reviewed POI.
pub fn lsva_tables(ctx: &Context) -> Result<Vec<(String, Vec<LsvaPoint>)>> {
    let scored = read_scored(&ctx.out)?;
    let reviews = read_reviews(&ctx.out)?;
    let texts = texts_by_id(&reviews);
    let sectors: BTreeMap<String, String> = read_pois(&ctx.out)?
        .into_iter()
        .map(|p| (p.poi_id, sector_key(&p.naics_code)))
        .collect();
    let stoplist = ctx.stoplist()?;
    let top_k = ctx.config.stats.lsva_top_k;
    let mut all = Vec::with_capacity(scored.len());
    let mut by_sector: BTreeMap<String, Vec<(Vec<String>, SentimentClass)>> = BTreeMap::new();
    for r in &scored {
        let text = texts
            .get(r.review_id.as_str())
            .ok_or_else(|| anyhow!("scored review {} missing from reviews.csv", r.review_id))?;
        let doc = (tokenize(text), SentimentClass::from_sign(r.sentiment));
        let sector = sectors
            .get(&r.poi_id)
            .cloned()
            .unwrap_or_else(|| UNKNOWN_SECTOR.to_string());
        by_sector.entry(sector).or_default().push(doc.clone());
        all.push(doc);
    }
    let mut out = Vec::new();
    if all.is_empty() {
        return Ok(out);
    }
    out.push(("all".to_string(), lsva(&all, top_k, &stoplist)?));
    for (sector, docs) in by_sector {
        out.push((sector, lsva(&docs, top_k, &stoplist)?));
    }
    Ok(out)
}

fn write_lsva(ctx: &Context, rec: &mut StageRecord) -> Result<()> {
    let tables = lsva_tables(ctx)?;
    let mut rows = Vec::new();
    for (category, points) in &tables {
        for (i, p) in points.iter().enumerate() {
            rows.push(vec![
                category.clone(),
                (i + 1).to_string(),
                p.word.clone(),
                fmt_f64(p.salience),
                fmt_f64(p.valence),
                p.n_total.to_string(),
                p.n_positive.to_string(),
                p.n_negative.to_string(),
            ]);
        }
    }
    rec.count("lsva_tables", tables.len());
    rec.count("lsva_rows", rows.len());
    rec.set("lsva_top_k", ctx.config.stats.lsva_top_k);
    artifact::LSVA.write(&ctx.out, None, rows)?;
    rec.output(artifact::LSVA.file);
    Ok(())
}

pub fn lsva_stage(ctx: &Context) -> Result<StageRecord> {
    let mut rec = StageRecord::new("lsva", "reviews");
    let n = read_scored(&ctx.out)?.len();
    rec.rows_in = n;
    rec.rows_out = n;
    write_lsva(ctx, &mut rec)?;
    Ok(rec)
}

pub fn stats(ctx: &Context) -> Result<StageRecord> {
    let mut rec = StageRecord::new("stats", "pois");
    let pois = read_poi_sentiment(&ctx.out)?;
    rec.rows_in = pois.len();
    rec.rows_out = pois.len();
    let sc = &ctx.config.stats;
    rec.set("top_sectors", sc.top_sectors);
    rec.set("min_subcategory_pois", sc.min_subcategory_pois);
    let tests = category_tests(&pois, sc.top_sectors, sc.min_subcategory_pois);
    rec.count("tests", tests.len());
    artifact::TESTS.write(&ctx.out, None, tests)?;

    let cbg = read_cbg_sentiment(&ctx.out)?;
    let (names, factors) = read_factor_table(&ctx.out)?;
    let joined: Vec<(f64, &Vec<f64>)> = cbg
        .iter()
        .filter_map(|(id, (_, mean))| factors.get(id).map(|f| (*mean, f)))
        .collect();
    if joined.len() < cbg.len() {
        rec.warnings.push(format!(
            "{} CBGs with sentiment have no factor row",
            cbg.len() - joined.len()
        ));
    }
    let y: Vec<f64> = joined.iter().map(|(m, _)| *m).collect();
    let mut corr_rows = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let x: Vec<f64> = joined.iter().map(|(_, f)| f[j]).collect();
        let (value, note) = match pearson(&x, &y) {
            Ok(r) => (fmt_f64(r), String::new()),
            Err(e) => (String::new(), e.to_string()),
        };
        corr_rows.push(vec![name.clone(), x.len().to_string(), value, note]);
    }
    artifact::CORRELATIONS.write(&ctx.out, None, corr_rows)?;
    rec.count("cbgs_correlated", joined.len());
    write_lsva(ctx, &mut rec)?;
    rec.output(artifact::TESTS.file);
    rec.output(artifact::CORRELATIONS.file);
    Ok(rec)
}

// ------------------------------------------------------------------------ pls

/// A regression table: one row per unit, named predictor columns.
#[derive(Debug, Clone)]
pub struct PlsInput {
    pub ids: Vec<String>,
    pub names: Vec<String>,
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

/// Join CBG sentiment with the factor table.
pub fn pls_input_from_bundle(dir: &Path, rec: &mut StageRecord) -> Result<PlsInput> {
    let cbg = read_cbg_sentiment(dir)?;
    let (names, factors) = read_factor_table(dir)?;
    rec.rows_in = cbg.len();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (id, (_, mean)) in &cbg {
        if let Some(f) = factors.get(id) {
            ids.push(id.clone());
            rows.extend_from_slice(f);
            y.push(*mean);
        }
    }
    rec.drop("no_factor_row", cbg.len() - ids.len());
    let x = Array2::from_shape_vec((ids.len(), names.len()), rows)?;
    Ok(PlsInput {
        ids,
        names,
        x,
        y: Array1::from(y),
    })
}

/// Read a plain CSV table (lines starting with `#` are comments). Numeric
/// columns other than `response` become predictors; a `cbg_id` column, or a
/// leading non-numeric column, labels the rows.
pub fn pls_input_from_table(
    path: &Path,
    response: &str,
    rec: &mut StageRecord,
) -> Result<PlsInput> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(open(path)?);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let records: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>()?;
    let resp = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| anyhow!("{}: no column {response:?}", file_name(path)))?;
    let numeric = |c: usize| {
        records
            .iter()
            .all(|r| r.get(c).is_some_and(|v| v.trim().parse::<f64>().is_ok()))
    };
    if !numeric(resp) {
        bail!(
            "{}: response column {response:?} is not numeric",
            file_name(path)
        );
    }
    let id_col = headers
        .iter()
        .position(|h| h == "cbg_id")
        .or_else(|| (!headers.is_empty() && !numeric(0) && resp != 0).then_some(0));
    let mut predictors = Vec::new();
    for (c, h) in headers.iter().enumerate() {
        if c == resp || Some(c) == id_col {
            continue;
        }
        if numeric(c) {
            predictors.push(c);
        } else {
            rec.warnings
                .push(format!("non-numeric column {h:?} ignored"));
        }
    }
    let n = records.len();
    rec.rows_in = n;
    let value =
        |r: &csv::StringRecord, c: usize| r[c].trim().parse::<f64>().expect("checked numeric");
    let x = Array2::from_shape_fn((n, predictors.len()), |(i, j)| {
        value(&records[i], predictors[j])
    });
    let y = Array1::from_iter(records.iter().map(|r| value(r, resp)));
    let ids = records
        .iter()
        .enumerate()
        .map(|(i, r)| match id_col {
            Some(c) => r[c].trim().to_string(),
            None => (i + 1).to_string(),
        })
        .collect();
    Ok(PlsInput {
        ids,
        names: predictors.iter().map(|&c| headers[c].clone()).collect(),
        x,
        y,
    })
}

/// Select components by cross-validated RMSEP, fit, and write the
/// coefficient table, fit statistics and RMSEP curve to `out`.
pub fn run_pls(
    input: PlsInput,
    cfg: &PlsConfig,
    seed: u64,
    out: &Path,
    rec: &mut StageRecord,
) -> Result<()> {
    let n = input.ids.len();
    rec.rows_out = n;
    if n < 3 {
        bail!("PLS needs at least 3 rows, found {n}");
    }
    let mut keep = Vec::new();
    for (j, name) in input.names.iter().enumerate() {
        let col = input.x.column(j);
        if col.iter().all(|v| *v == col[0]) {
            rec.warnings
                .push(format!("constant predictor {name:?} dropped"));
        } else {
            keep.push(j);
        }
    }
    if keep.is_empty() {
        bail!("no non-constant predictors");
    }
    let names: Vec<String> = keep.iter().map(|&j| input.names[j].clone()).collect();
    let x = input.x.select(ndarray::Axis(1), &keep);
    let y = input.y;
    let folds = cfg.folds.min(n);
    if folds < cfg.folds {
        rec.warnings.push(format!(
            "{} folds requested but only {n} rows; using {folds}",
            cfg.folds
        ));
    }
    let max_ncomp = cfg.max_components.min(names.len()).min(n - 1);
    rec.set("folds", folds);
    rec.set("max_components", max_ncomp);
    rec.count("predictors", names.len());

    let selection = select_components(&x, &y, max_ncomp, folds, seed)?;
    let k = selection.n_components;
    let model = PlsModel::fit(&x, &y, k)?;
    let fit = goodness_of_fit(&model, &x, &y, folds, seed)?;
    let (xz, _) = zscore(&x)?;
    let (yz, _, _) = zscore_vector(&y)?;
    let table = jackknife_pvalues(&xz, &yz, k, folds, seed)?;
    rec.count("components", k);

    let coef_rows = names.iter().zip(&table.rows).map(|(name, r)| {
        vec![
            name.clone(),
            fmt_f64(r.coefficient),
            fmt_f64(r.std_err),
            fmt_f64(r.t_value),
            fmt_f64(r.p_value),
            fmt_f64(r.lower_2_5),
            fmt_f64(r.upper_97_5),
            r.stars().to_string(),
            bool_str(r.degenerate_variance).to_string(),
        ]
    });
    artifact::PLS_COEFFICIENTS.write(out, None, coef_rows)?;
    let cum_x: f64 = fit.variance_explained_x.iter().sum();
    let cum_y: f64 = fit.variance_explained_y.iter().sum();
    let stats = [
        ("n_obs", n.to_string()),
        ("n_predictors", names.len().to_string()),
        ("n_components", k.to_string()),
        ("folds", folds.to_string()),
        ("r2_full", fmt_f64(fit.r2_full)),
        ("r2_cv", fmt_f64(fit.r2_cv)),
        ("rmse_full", fmt_f64(fit.rmse_full)),
        ("rmse_cv", fmt_f64(fit.rmse_cv)),
        ("variance_explained_x_pct", fmt_f64(cum_x)),
        ("variance_explained_y_pct", fmt_f64(cum_y)),
    ];
    artifact::PLS_FITSTATS.write(
        out,
        None,
        stats.iter().map(|(m, v)| vec![m.to_string(), v.clone()]),
    )?;
    artifact::RMSEP_CURVE.write(
        out,
        None,
        selection
            .rmsep
            .iter()
            .enumerate()
            .map(|(i, v)| vec![(i + 1).to_string(), fmt_opt(*v)]),
    )?;
    for f in [
        artifact::PLS_COEFFICIENTS.file,
        artifact::PLS_FITSTATS.file,
        artifact::RMSEP_CURVE.file,
    ] {
        rec.output(f);
    }
    Ok(())
}

pub fn pls(ctx: &Context) -> Result<StageRecord> {
    let mut rec = StageRecord::new("pls", "cbgs");
    let input = pls_input_from_bundle(&ctx.out, &mut rec)?;
    run_pls(
        input,
        &ctx.config.pls,
        ctx.stage_seed("pls"),
        &ctx.out,
        &mut rec,
    )?;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poi(code: &str, mean: f64) -> PoiSentiment {
        PoiSentiment {
            poi_id: format!("{code}-{mean}"),
            cbg_id: None,
            latitude: 0.0,
            longitude: 0.0,
            naics_code: code.into(),
            naics_top2: code[..2].into(),
            n_density_reviews: 10,
            mean_sentiment: mean,
        }
    }

    #[test]
    fn category_tests_pick_largest_sectors() {
        let mut pois = Vec::new();
        for (code, n) in [
            ("722511", 5),
            ("531110", 4),
            ("445110", 3),
            ("712110", 2),
            ("813110", 1),
        ] {
            for i in 0..n {
                pois.push(poi(code, i as f64 / 10.0));
            }
        }
        pois.push(poi("44X", 0.0));
        let rows = category_tests(&pois, 4, 3);
        let sector_pairs: Vec<(&str, &str)> = rows
            .iter()
            .filter(|r| r[0] == "sector")
            .map(|r| (r[1].as_str(), r[2].as_str()))
            .collect();
        assert_eq!(sector_pairs.len(), 6);
        assert_eq!(sector_pairs[0], ("72", "53"));
        assert!(!sector_pairs.iter().any(|(a, b)| *a == "81" || *b == "81"));
        let subs: Vec<&Vec<String>> = rows.iter().filter(|r| r[0] == "subcategory").collect();
        assert_eq!(subs.len(), 3);
        assert_eq!((subs[0][1].as_str(), subs[0][2].as_str()), ("7225", "5311"));
    }

    #[test]
    fn table_input_detects_id_and_predictors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(
            &p,
            "# comment\nname,a,b,y,tag\nr1,1,2,3,x\nr2,2,1,4,y\nr3,3,5,1,z\n",
        )
        .unwrap();
        let mut rec = StageRecord::new("pls", "rows");
        let input = pls_input_from_table(&p, "y", &mut rec).unwrap();
        assert_eq!(input.ids, ["r1", "r2", "r3"]);
        assert_eq!(input.names, ["a", "b"]);
        assert_eq!(input.y.to_vec(), [3.0, 4.0, 1.0]);
        assert_eq!(rec.warnings.len(), 1);
        assert!(pls_input_from_table(&p, "missing", &mut rec).is_err());
    }

    #[test]
    fn bool_round_trip() {
        assert!(parse_bool(bool_str(true)).unwrap());
        assert!(!parse_bool(bool_str(false)).unwrap());
        assert!(parse_bool("maybe").is_err());
    }
}
