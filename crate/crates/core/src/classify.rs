//! Review classification over TF-IDF features.
//!
//! Five model families are available: Gini decision trees (`dt`), random
//! forests (`rf`), multinomial naive Bayes (`nb`), support vector machines
//! (`svm`) and L2-regularized logistic regression (`lr`). Models are trained
//! from a [`ClassifierSpec`], evaluated with [`evaluate`], cross-validated
//! with stratified folds ([`kfold_cv`]) and tuned with [`grid_search`] over a
//! [`ParamGrid`]. Predictions from an external model can be read with
//! [`load_external_predictions`] and used in place of an internal model.
//!
//! Labels are booleans: `true` means the review expresses an attitude toward
//! urban density.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{IssueKind, ValidationIssue, ValidationReport};
use crate::seed;
use crate::textprep::TfidfMatrix;

/// Gradient norm below which logistic regression counts as converged.
pub const LR_GRADIENT_TOL: f64 = 1e-6;
/// Projected-gradient gap below which the SVM dual solver stops.
pub const SVM_TOL: f64 = 1e-3;
const LBFGS_MEMORY: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("feature matrix contains non-finite values")]
    NonFinite,
    #[error("naive Bayes requires non-negative features")]
    NegativeFeature,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{left} rows but {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("unknown hyperparameter {name:?} for {kind}")]
    UnknownParam { kind: ClassifierKind, name: String },
    #[error("invalid value for {name}: {message}")]
    BadParam { name: String, message: String },
    #[error("unknown classifier kind {0:?}")]
    UnknownKind(String),
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("class {label} has {count} documents, fewer than {folds} folds")]
    ClassTooSmall {
        label: bool,
        count: usize,
        folds: usize,
    },
    #[error("grid is empty")]
    EmptyGrid,
    #[error("every grid cell failed")]
    AllCellsFailed,
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("duplicate document id {0:?}")]
    DuplicateDocument(String),
    #[error("{source_name}: missing column {column:?}")]
    MissingColumn { source_name: String, column: String },
    #[error("{source_name}: {message}")]
    Csv {
        source_name: String,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Dt,
    Rf,
    Nb,
    Svm,
    Lr,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::Dt,
        ClassifierKind::Rf,
        ClassifierKind::Nb,
        ClassifierKind::Svm,
        ClassifierKind::Lr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Dt => "dt",
            ClassifierKind::Rf => "rf",
            ClassifierKind::Nb => "nb",
            ClassifierKind::Svm => "svm",
            ClassifierKind::Lr => "lr",
        }
    }

    /// Default hyperparameters: the selected cell of each bundled grid plus
    /// the fixed options that the grids do not vary.
    pub fn default_params(self) -> BTreeMap<String, ParamValue> {
        use ParamValue::*;
        let pairs: Vec<(&str, ParamValue)> = match self {
            ClassifierKind::Dt => vec![("max_depth", Int(5)), ("min_samples_leaf", Int(1))],
            ClassifierKind::Rf => vec![
                ("n_estimators", Int(400)),
                ("max_depth", Int(40)),
                ("min_samples_leaf", Int(1)),
                ("bootstrap", Bool(true)),
                ("max_features", Text("sqrt".into())),
            ],
            ClassifierKind::Nb => vec![("alpha", Float(0.2))],
            ClassifierKind::Svm => vec![
                ("kernel", Text("linear".into())),
                ("C", Float(1.0)),
                ("max_iter", Int(1000)),
                ("degree", Int(3)),
                ("gamma", Text("scale".into())),
            ],
            ClassifierKind::Lr => vec![
                ("solver", Text("lbfgs".into())),
                ("C", Float(2.0)),
                ("max_iter", Int(10)),
            ],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = ClassifyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| ClassifyError::UnknownKind(s.to_string()))
    }
}

/// A hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Float(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Text(v.to_string())
    }
}

impl From<bool> for ParamValue {
    fn from(v: bool) -> Self {
        ParamValue::Bool(v)
    }
}

/// Model family, hyperparameters and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub params: BTreeMap<String, ParamValue>,
    pub seed: u64,
}

fn bad(name: &str, message: impl Into<String>) -> ClassifyError {
    ClassifyError::BadParam {
        name: name.to_string(),
        message: message.into(),
    }
}

impl ClassifierSpec {
    /// Spec with the kind's default hyperparameters.
    pub fn new(kind: ClassifierKind, seed: u64) -> Self {
        ClassifierSpec {
            kind,
            params: kind.default_params(),
            seed,
        }
    }

    /// Override one hyperparameter, validating name and value.
    pub fn with(mut self, name: &str, value: impl Into<ParamValue>) -> Result<Self, ClassifyError> {
        if !self.kind.default_params().contains_key(name) {
            return Err(ClassifyError::UnknownParam {
                kind: self.kind,
                name: name.to_string(),
            });
        }
        self.params.insert(name.to_string(), value.into());
        self.validate()?;
        Ok(self)
    }

    /// Check every hyperparameter name and value for the kind.
    pub fn validate(&self) -> Result<(), ClassifyError> {
        let known = self.kind.default_params();
        for name in self.params.keys() {
            if !known.contains_key(name) {
                return Err(ClassifyError::UnknownParam {
                    kind: self.kind,
                    name: name.clone(),
                });
            }
        }
        match self.kind {
            ClassifierKind::Dt => {
                self.int_at_least("max_depth", 1)?;
                self.int_at_least("min_samples_leaf", 1)?;
            }
            ClassifierKind::Rf => {
                self.int_at_least("n_estimators", 1)?;
                self.int_at_least("max_depth", 1)?;
                self.int_at_least("min_samples_leaf", 1)?;
                self.boolean("bootstrap")?;
                self.max_features(1)?;
            }
            ClassifierKind::Nb => {
                self.positive("alpha")?;
            }
            ClassifierKind::Svm => {
                self.choice("kernel", &["rbf", "poly", "linear"])?;
                self.positive("C")?;
                self.int_at_least("max_iter", 1)?;
                self.int_at_least("degree", 1)?;
                self.gamma()?;
            }
            ClassifierKind::Lr => {
                self.choice("solver", &["sag", "saga", "lbfgs"])?;
                self.positive("C")?;
                self.int_at_least("max_iter", 1)?;
            }
        }
        Ok(())
    }

    fn get(&self, name: &str) -> ParamValue {
        self.params
            .get(name)
            .cloned()
            .or_else(|| self.kind.default_params().remove(name))
            .expect("parameter known for kind")
    }

    fn int_at_least(&self, name: &str, min: i64) -> Result<usize, ClassifyError> {
        match self.get(name) {
            ParamValue::Int(v) if v >= min => Ok(v as usize),
            other => Err(bad(
                name,
                format!("expected an integer >= {min}, got {other}"),
            )),
        }
    }

    fn positive(&self, name: &str) -> Result<f64, ClassifyError> {
        let v = match self.get(name) {
            ParamValue::Int(v) => v as f64,
            ParamValue::Float(v) => v,
            other => return Err(bad(name, format!("expected a number, got {other}"))),
        };
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(bad(name, format!("expected a positive number, got {v}")))
        }
    }

    fn boolean(&self, name: &str) -> Result<bool, ClassifyError> {
        match self.get(name) {
            ParamValue::Bool(b) => Ok(b),
            other => Err(bad(name, format!("expected true or false, got {other}"))),
        }
    }

    fn choice(&self, name: &str, options: &[&str]) -> Result<String, ClassifyError> {
        match self.get(name) {
            ParamValue::Text(s) if options.contains(&s.as_str()) => Ok(s),
            other => Err(bad(
                name,
                format!("expected one of {options:?}, got {other}"),
            )),
        }
    }

    /// `None` means every feature is a split candidate.
    fn max_features(&self, n_features: usize) -> Result<Option<usize>, ClassifyError> {
        match self.get("max_features") {
            ParamValue::Text(s) if s == "sqrt" => {
                Ok(Some(((n_features as f64).sqrt() as usize).max(1)))
            }
            ParamValue::Text(s) if s == "log2" => {
                Ok(Some(((n_features as f64).log2().max(0.0) as usize).max(1)))
            }
            ParamValue::Text(s) if s == "all" => Ok(None),
            ParamValue::Int(k) if k >= 1 => Ok(Some(k as usize)),
            other => Err(bad(
                "max_features",
                format!("expected sqrt, log2, all or a positive integer, got {other}"),
            )),
        }
    }

    /// `None` means `1 / (n_features * var(X))`.
    fn gamma(&self) -> Result<Option<f64>, ClassifyError> {
        match self.get("gamma") {
            ParamValue::Text(s) if s == "scale" => Ok(None),
            _ => self.positive("gamma").map(Some),
        }
    }

    /// Hyperparameters as `name=value` pairs joined by `;`.
    pub fn params_string(&self) -> String {
        self.params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Whether a labeled document belongs to the training or the test split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Hand-labeled documents with their split assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub doc_ids: Vec<String>,
    pub labels: Vec<bool>,
    pub splits: Vec<Split>,
}

impl LabeledSet {
    pub fn new(
        doc_ids: Vec<String>,
        labels: Vec<bool>,
        splits: Vec<Split>,
    ) -> Result<Self, ClassifyError> {
        if labels.len() != doc_ids.len() || splits.len() != doc_ids.len() {
            return Err(ClassifyError::LengthMismatch {
                left: doc_ids.len(),
                right: labels.len().min(splits.len()),
            });
        }
        let mut seen = BTreeSet::new();
        for id in &doc_ids {
            if !seen.insert(id.as_str()) {
                return Err(ClassifyError::DuplicateDocument(id.clone()));
            }
        }
        Ok(LabeledSet {
            doc_ids,
            labels,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.splits[i] == split)
            .collect()
    }
}

fn parse_label(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

/// Read `review_id,label,split` (split optional, default `train`).
pub fn read_labels<R: Read>(
    reader: R,
    source_name: &str,
) -> Result<(LabeledSet, ValidationReport), ClassifyError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let csv_err = |e: csv::Error| ClassifyError::Csv {
        source_name: source_name.into(),
        message: e.to_string(),
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let find = |col: &str| headers.iter().position(|h| h.trim() == col);
    let missing = |col: &str| ClassifyError::MissingColumn {
        source_name: source_name.into(),
        column: col.into(),
    };
    let id_col = find("review_id").ok_or_else(|| missing("review_id"))?;
    let label_col = find("label").ok_or_else(|| missing("label"))?;
    let split_col = find("split");
    let mut report = ValidationReport::default();
    let (mut ids, mut labels, mut splits) = (Vec::new(), Vec::new(), Vec::new());
    let mut seen = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let issue = |kind, column: &str, message: String| ValidationIssue {
            source: source_name.to_string(),
            row: Some(row),
            column: Some(column.to_string()),
            kind,
            message,
        };
        let rec = rec.map_err(csv_err)?;
        let id = rec.get(id_col).unwrap_or("").trim().to_string();
        let Some(label) = parse_label(rec.get(label_col).unwrap_or("")) else {
            report.issues.push(issue(
                IssueKind::Parse,
                "label",
                "label must be True or False".into(),
            ));
            continue;
        };
        let split = match split_col.map(|c| rec.get(c).unwrap_or("").trim().to_ascii_lowercase()) {
            None => Split::Train,
            Some(s) if s.is_empty() || s == "train" => Split::Train,
            Some(s) if s == "test" => Split::Test,
            Some(s) => {
                report.issues.push(issue(
                    IssueKind::Parse,
                    "split",
                    format!("unknown split {s:?}"),
                ));
                continue;
            }
        };
        if !seen.insert(id.clone()) {
            report.issues.push(issue(
                IssueKind::DuplicateKey,
                "review_id",
                format!("duplicate review_id {id}"),
            ));
            continue;
        }
        ids.push(id);
        labels.push(label);
        splits.push(split);
    }
    Ok((LabeledSet::new(ids, labels, splits)?, report))
}

/// Precision, recall and F1 for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Confusion counts with `true` as the positive class, per-class metrics
/// and accuracy. Undefined ratios (zero denominators) are reported as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub accuracy: f64,
    pub positive: ClassMetrics,
    pub negative: ClassMetrics,
}

impl EvalMetrics {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn macro_f1(&self) -> f64 {
        (self.positive.f1 + self.negative.f1) / 2.0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_metrics(hit: usize, false_alarm: usize, miss: usize) -> ClassMetrics {
    let precision = ratio(hit, hit + false_alarm);
    let recall = ratio(hit, hit + miss);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassMetrics {
        precision,
        recall,
        f1,
        support: hit + miss,
    }
}

/// Compare predictions with ground truth.
pub fn evaluate(pred: &[bool], truth: &[bool]) -> Result<EvalMetrics, ClassifyError> {
    if pred.len() != truth.len() {
        return Err(ClassifyError::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(ClassifyError::EmptyInput);
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(EvalMetrics {
        tp,
        fp,
        fn_,
        tn,
        accuracy: ratio(tp + tn, pred.len()),
        positive: class_metrics(tp, fp, fn_),
        negative: class_metrics(tn, fn_, fp),
    })
}

/// Predict the more frequent training class for every document; ties go to
/// `false`.
pub fn majority_baseline(train_labels: &[bool], n: usize) -> Vec<bool> {
    let n_true = train_labels.iter().filter(|&&y| y).count();
    vec![2 * n_true > train_labels.len(); n]
}

/// Row-sparse features with column-sorted rows.
#[derive(Debug, Clone)]
struct Rows {
    rows: Vec<Vec<(usize, f64)>>,
    n_features: usize,
}

impl Rows {
    fn from_matrix(x: &TfidfMatrix) -> Result<Self, ClassifyError> {
        let n_features = x.n_features();
        let mut rows = x.rows.clone();
        for row in &mut rows {
            row.sort_by_key(|&(c, _)| c);
            for &(c, v) in row.iter() {
                if !v.is_finite() {
                    return Err(ClassifyError::NonFinite);
                }
                if c >= n_features {
                    return Err(ClassifyError::DimensionMismatch {
                        expected: n_features,
                        got: c + 1,
                    });
                }
            }
        }
        Ok(Rows { rows, n_features })
    }

    fn len(&self) -> usize {
        self.rows.len()
    }
}

fn value_at(row: &[(usize, f64)], feature: usize) -> f64 {
    match row.binary_search_by_key(&feature, |&(c, _)| c) {
        Ok(i) => row[i].1,
        Err(_) => 0.0,
    }
}

fn sparse_dot(row: &[(usize, f64)], w: &[f64]) -> f64 {
    row.iter().map(|&(c, v)| v * w[c]).sum()
}

fn sparse_dot_sparse(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

fn sq_norm(row: &[(usize, f64)]) -> f64 {
    row.iter().map(|&(_, v)| v * v).sum()
}

// ---------------------------------------------------------------- trees

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        p_true: f64,
        weight: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary classification tree; `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    fn leaf_p_true(&self, row: &[(usize, f64)]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { p_true, .. } => return *p_true,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if value_at(row, *feature) <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

struct TreeParams {
    max_depth: usize,
    min_samples_leaf: f64,
    max_features: Option<usize>,
}

struct TreeBuilder<'a> {
    rows: &'a Rows,
    columns: &'a [Vec<(usize, f64)>],
    y: &'a [bool],
    params: &'a TreeParams,
    node_weight: Vec<f64>,
    feature_order: Vec<usize>,
    nodes: Vec<TreeNode>,
}

fn column_index(rows: &Rows) -> Vec<Vec<(usize, f64)>> {
    let mut cols = vec![Vec::new(); rows.n_features];
    for (doc, row) in rows.rows.iter().enumerate() {
        for &(c, v) in row {
            if v != 0.0 {
                cols[c].push((doc, v));
            }
        }
    }
    cols
}

fn gini_score(t: f64, f: f64) -> f64 {
    let w = t + f;
    if w > 0.0 {
        (t * t + f * f) / w
    } else {
        0.0
    }
}

impl<'a> TreeBuilder<'a> {
    fn build(mut self, weights: &[f64], rng: Option<&mut ChaCha8Rng>) -> DecisionTree {
        let members: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
        let mut rng = rng;
        self.grow(&members, weights, 0, &mut rng);
        DecisionTree { nodes: self.nodes }
    }

    fn grow(
        &mut self,
        members: &[usize],
        weights: &[f64],
        depth: usize,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> usize {
        let (mut wt, mut wf) = (0.0, 0.0);
        for &i in members {
            if self.y[i] {
                wt += weights[i];
            } else {
                wf += weights[i];
            }
        }
        let total = wt + wf;
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            p_true: wt / total,
            weight: total,
        });
        if depth >= self.params.max_depth
            || wt == 0.0
            || wf == 0.0
            || total < 2.0 * self.params.min_samples_leaf
        {
            return id;
        }
        for &i in members {
            self.node_weight[i] = weights[i];
        }
        let best = self.best_split(wt, wf, rng);
        for &i in members {
            self.node_weight[i] = 0.0;
        }
        let Some((feature, threshold)) = best else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = members
            .iter()
            .partition(|&&i| value_at(&self.rows.rows[i], feature) <= threshold);
        let l = self.grow(&left, weights, depth + 1, rng);
        let r = self.grow(&right, weights, depth + 1, rng);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left: l,
            right: r,
        };
        id
    }

    fn best_split(
        &mut self,
        wt: f64,
        wf: f64,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> Option<(usize, f64)> {
        let p = self.rows.n_features;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut visited = 0;
        for j in 0..p {
            let feature = match (self.params.max_features, rng.as_deref_mut()) {
                (Some(k), Some(r)) => {
                    if visited >= k {
                        break;
                    }
                    let pick = r.gen_range(j..p);
                    self.feature_order.swap(j, pick);
                    self.feature_order[j]
                }
                _ => j,
            };
            let Some((score, threshold)) = self.evaluate_feature(feature, wt, wf) else {
                continue;
            };
            visited += 1;
            if let Some(thr) = threshold {
                if best.is_none_or(|(s, _, _)| score > s) {
                    best = Some((score, feature, thr));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    /// `None` for a feature that is constant within the node; otherwise the
    /// best score and threshold (threshold `None` when no split satisfies
    /// the leaf-size constraint).
    fn evaluate_feature(&self, feature: usize, wt: f64, wf: f64) -> Option<(f64, Option<f64>)> {
        let mut entries: Vec<(f64, f64, f64)> = Vec::new();
        let (mut nz_t, mut nz_f) = (0.0, 0.0);
        for &(doc, v) in &self.columns[feature] {
            let w = self.node_weight[doc];
            if w > 0.0 {
                if self.y[doc] {
                    entries.push((v, w, 0.0));
                    nz_t += w;
                } else {
                    entries.push((v, 0.0, w));
                    nz_f += w;
                }
            }
        }
        if entries.is_empty() {
            return None;
        }
        let (zero_t, zero_f) = (wt - nz_t, wf - nz_f);
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut groups: Vec<(f64, f64, f64)> = Vec::with_capacity(entries.len() + 1);
        let mut zero_pending = zero_t + zero_f > 0.0;
        for (v, t, f) in entries {
            if zero_pending && v > 0.0 {
                groups.push((0.0, zero_t, zero_f));
                zero_pending = false;
            }
            match groups.last_mut() {
                Some(g) if g.0 == v => {
                    g.1 += t;
                    g.2 += f;
                }
                _ => groups.push((v, t, f)),
            }
        }
        if zero_pending {
            groups.push((0.0, zero_t, zero_f));
        }
        if groups.len() < 2 {
            return None;
        }
        let total = wt + wf;
        let min_leaf = self.params.min_samples_leaf;
        let (mut lt, mut lf) = (0.0, 0.0);
        let mut best: Option<(f64, f64)> = None;
        for i in 0..groups.len() - 1 {
            lt += groups[i].1;
            lf += groups[i].2;
            let wl = lt + lf;
            if wl < min_leaf || total - wl < min_leaf {
                continue;
            }
            let score = gini_score(lt, lf) + gini_score(wt - lt, wf - lf);
            if best.is_none_or(|(s, _)| score > s) {
                let (a, b) = (groups[i].0, groups[i + 1].0);
                let mid = a + (b - a) / 2.0;
                best = Some((score, if mid < b { mid } else { a }));
            }
        }
        Some(match best {
            Some((s, t)) => (s, Some(t)),
            None => (f64::NEG_INFINITY, None),
        })
    }
}

fn grow_tree(
    rows: &Rows,
    columns: &[Vec<(usize, f64)>],
    y: &[bool],
    weights: &[f64],
    params: &TreeParams,
    rng: Option<&mut ChaCha8Rng>,
) -> DecisionTree {
    TreeBuilder {
        rows,
        columns,
        y,
        params,
        node_weight: vec![0.0; rows.len()],
        feature_order: (0..rows.n_features).collect(),
        nodes: Vec::new(),
    }
    .build(weights, rng)
}

/// Majority vote over trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

// ---------------------------------------------------------------- naive Bayes

/// Multinomial naive Bayes with additive smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    /// `[false, true]` log priors.
    pub log_prior: [f64; 2],
    /// `[false, true]` per-feature log probabilities.
    pub log_prob: [Vec<f64>; 2],
}

impl NaiveBayes {
    fn fit(rows: &Rows, y: &[bool], alpha: f64) -> Result<Self, ClassifyError> {
        let p = rows.n_features;
        let mut counts = [vec![0.0; p], vec![0.0; p]];
        let mut docs = [0usize; 2];
        for (row, &label) in rows.rows.iter().zip(y) {
            let c = label as usize;
            docs[c] += 1;
            for &(f, v) in row {
                if v < 0.0 {
                    return Err(ClassifyError::NegativeFeature);
                }
                counts[c][f] += v;
            }
        }
        let n = y.len() as f64;
        let log_prob = counts.map(|cnt| {
            let denom = (cnt.iter().sum::<f64>() + alpha * p as f64).ln();
            cnt.iter().map(|c| (c + alpha).ln() - denom).collect()
        });
        Ok(NaiveBayes {
            log_prior: [(docs[0] as f64 / n).ln(), (docs[1] as f64 / n).ln()],
            log_prob,
        })
    }

    /// Joint log-likelihoods `[false, true]`.
    pub fn joint_log_likelihood(&self, row: &[(usize, f64)]) -> [f64; 2] {
        [0, 1].map(|c| self.log_prior[c] + sparse_dot(row, &self.log_prob[c]))
    }

    fn prob_true(&self, row: &[(usize, f64)]) -> f64 {
        let [f, t] = self.joint_log_likelihood(row);
        1.0 / (1.0 + (f - t).exp())
    }
}

// ---------------------------------------------------------------- SVM

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
    Poly { gamma: f64, degree: u32 },
}

impl Kernel {
    fn eval(&self, a: &[(usize, f64)], b: &[(usize, f64)], na: f64, nb: f64) -> f64 {
        let dot = sparse_dot_sparse(a, b);
        match *self {
            Kernel::Linear => dot,
            Kernel::Rbf { gamma } => (-gamma * (na + nb - 2.0 * dot).max(0.0)).exp(),
            Kernel::Poly { gamma, degree } => (gamma * dot).powi(degree as i32),
        }
    }
}

/// Hinge-loss SVM solved in the dual by coordinate descent. The bias enters
/// as an extra constant feature, so it is regularized together with `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportVectorMachine {
    pub kernel: Kernel,
    /// Primal weights (linear kernel only).
    pub weights: Vec<f64>,
    pub bias: f64,
    /// `alpha_i * y_i` and the support vector rows (non-linear kernels).
    pub dual_coef: Vec<f64>,
    pub support_vectors: Vec<Vec<(usize, f64)>>,
    pub iterations: usize,
    pub converged: bool,
}

fn signs(y: &[bool]) -> Vec<f64> {
    y.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect()
}

fn projected_gradient(g: f64, alpha: f64, c: f64) -> f64 {
    if alpha <= 0.0 {
        g.min(0.0)
    } else if alpha >= c {
        g.max(0.0)
    } else {
        g
    }
}

impl SupportVectorMachine {
    fn fit(rows: &Rows, y: &[bool], kernel: Kernel, c: f64, max_iter: usize, seed: u64) -> Self {
        let ys = signs(y);
        let n = rows.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut alpha = vec![0.0; n];
        let mut iterations = 0;
        let mut converged = false;
        if let Kernel::Linear = kernel {
            let mut w = vec![0.0; rows.n_features];
            let mut b = 0.0;
            let qii: Vec<f64> = rows.rows.iter().map(|r| sq_norm(r) + 1.0).collect();
            for _ in 0..max_iter {
                iterations += 1;
                order.shuffle(&mut rng);
                let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
                for &i in &order {
                    let row = &rows.rows[i];
                    let g = ys[i] * (sparse_dot(row, &w) + b) - 1.0;
                    let pg = projected_gradient(g, alpha[i], c);
                    hi = hi.max(pg);
                    lo = lo.min(pg);
                    if pg != 0.0 {
                        let old = alpha[i];
                        alpha[i] = (old - g / qii[i]).clamp(0.0, c);
                        let d = (alpha[i] - old) * ys[i];
                        for &(f, v) in row {
                            w[f] += d * v;
                        }
                        b += d;
                    }
                }
                if hi - lo < SVM_TOL {
                    converged = true;
                    break;
                }
            }
            return SupportVectorMachine {
                kernel,
                weights: w,
                bias: b,
                dual_coef: Vec::new(),
                support_vectors: Vec::new(),
                iterations,
                converged,
            };
        }
        let norms: Vec<f64> = rows.rows.iter().map(|r| sq_norm(r)).collect();
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let k = kernel.eval(&rows.rows[i], &rows.rows[j], norms[i], norms[j]) + 1.0;
                q[i * n + j] = ys[i] * ys[j] * k;
                q[j * n + i] = q[i * n + j];
            }
        }
        let mut grad = vec![-1.0; n];
        for _ in 0..max_iter {
            iterations += 1;
            order.shuffle(&mut rng);
            let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
            for &i in &order {
                let g = grad[i];
                let pg = projected_gradient(g, alpha[i], c);
                hi = hi.max(pg);
                lo = lo.min(pg);
                let qii = q[i * n + i];
                if pg != 0.0 && qii > 0.0 {
                    let old = alpha[i];
                    alpha[i] = (old - g / qii).clamp(0.0, c);
                    let d = alpha[i] - old;
                    if d != 0.0 {
                        for (gj, qij) in grad.iter_mut().zip(&q[i * n..(i + 1) * n]) {
                            *gj += d * qij;
                        }
                    }
                }
            }
            if hi - lo < SVM_TOL {
                converged = true;
                break;
            }
        }
        let mut dual_coef = Vec::new();
        let mut support_vectors = Vec::new();
        for i in 0..n {
            if alpha[i] > 0.0 {
                dual_coef.push(alpha[i] * ys[i]);
                support_vectors.push(rows.rows[i].clone());
            }
        }
        SupportVectorMachine {
            kernel,
            weights: Vec::new(),
            bias: dual_coef.iter().sum(),
            dual_coef,
            support_vectors,
            iterations,
            converged,
        }
    }

    fn decision(&self, row: &[(usize, f64)]) -> f64 {
        match self.kernel {
            Kernel::Linear => sparse_dot(row, &self.weights) + self.bias,
            _ => {
                let nr = sq_norm(row);
                self.support_vectors
                    .iter()
                    .zip(&self.dual_coef)
                    .map(|(sv, a)| a * self.kernel.eval(sv, row, sq_norm(sv), nr))
                    .sum::<f64>()
                    + self.bias
            }
        }
    }
}

// ---------------------------------------------------------------- logistic regression

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Lbfgs,
    Sag,
    Saga,
}

/// L2-regularized logistic regression minimizing
/// `sum_i logloss_i + ||w||^2 / (2C)`; the intercept is not penalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub solver: Solver,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Objective value at the start and after every iteration (lbfgs) or
    /// epoch (sag, saga).
    pub loss_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct LogisticProblem<'a> {
    rows: &'a Rows,
    y: &'a [f64],
    inv_c: f64,
}

impl LogisticProblem<'_> {
    /// Objective and gradient at `theta = [w, b]`.
    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let p = self.rows.n_features;
        let (w, b) = (&theta[..p], theta[p]);
        let mut grad = vec![0.0; p + 1];
        let mut loss = 0.0;
        for (row, &yi) in self.rows.rows.iter().zip(self.y) {
            let z = sparse_dot(row, w) + b;
            loss += if yi > 0.5 { softplus(-z) } else { softplus(z) };
            let r = sigmoid(z) - yi;
            for &(f, v) in row {
                grad[f] += r * v;
            }
            grad[p] += r;
        }
        let mut reg = 0.0;
        for (g, wi) in grad[..p].iter_mut().zip(w) {
            *g += self.inv_c * wi;
            reg += wi * wi;
        }
        (loss + 0.5 * self.inv_c * reg, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl LogisticRegression {
    fn fit(rows: &Rows, y: &[bool], solver: Solver, c: f64, max_iter: usize, seed: u64) -> Self {
        let yv: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let problem = LogisticProblem {
            rows,
            y: &yv,
            inv_c: 1.0 / c,
        };
        match solver {
            Solver::Lbfgs => Self::lbfgs(&problem, max_iter),
            Solver::Sag | Solver::Saga => Self::stochastic(&problem, solver, max_iter, seed),
        }
    }

    fn lbfgs(problem: &LogisticProblem, max_iter: usize) -> Self {
        let dim = problem.rows.n_features + 1;
        let mut theta = vec![0.0; dim];
        let (mut f, mut g) = problem.eval(&theta);
        let mut history = vec![f];
        let mut memory: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
        let mut iterations = 0;
        while iterations < max_iter && norm(&g) >= LR_GRADIENT_TOL {
            let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
            let mut alphas = Vec::with_capacity(memory.len());
            for (s, yv, rho) in memory.iter().rev() {
                let a = rho * dot(s, &d);
                for (di, yi) in d.iter_mut().zip(yv) {
                    *di -= a * yi;
                }
                alphas.push(a);
            }
            if let Some((s, yv, _)) = memory.last() {
                let scale = dot(s, yv) / dot(yv, yv);
                d.iter_mut().for_each(|di| *di *= scale);
            }
            for ((s, yv, rho), a) in memory.iter().zip(alphas.iter().rev()) {
                let bcoef = rho * dot(yv, &d);
                for (di, si) in d.iter_mut().zip(s) {
                    *di += (a - bcoef) * si;
                }
            }
            let mut slope = dot(&g, &d);
            if slope >= 0.0 {
                memory.clear();
                d = g.iter().map(|v| -v).collect();
                slope = -dot(&g, &g);
            }
            let mut step = if memory.is_empty() {
                (1.0 / norm(&g)).min(1.0)
            } else {
                1.0
            };
            let accepted = loop {
                let cand: Vec<f64> = theta.iter().zip(&d).map(|(t, di)| t + step * di).collect();
                let (fc, gc) = problem.eval(&cand);
                if fc <= f + 1e-4 * step * slope {
                    break Some((cand, fc, gc));
                }
                step *= 0.5;
                if step < 1e-20 {
                    break None;
                }
            };
            let Some((cand, fc, gc)) = accepted else {
                break;
            };
            let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &yv);
            if sy > 1e-12 {
                if memory.len() == LBFGS_MEMORY {
                    memory.remove(0);
                }
                memory.push((s, yv, 1.0 / sy));
            }
            theta = cand;
            f = fc;
            g = gc;
            history.push(f);
            iterations += 1;
        }
        let gradient_norm = norm(&g);
        let p = problem.rows.n_features;
        LogisticRegression {
            solver: Solver::Lbfgs,
            bias: theta[p],
            weights: theta[..p].to_vec(),
            loss_history: history,
            iterations,
            converged: gradient_norm < LR_GRADIENT_TOL,
            gradient_norm,
        }
    }

    /// SAG / SAGA on `(1/n) sum_i [logloss_i + ||w||^2 / (2Cn)]` with
    /// gradient memory starting at zero. Dense coordinates are updated
    /// lazily: between two visits a coordinate follows the linear recursion
    /// `w <- a w - c S` with constant `S`, which has a closed form.
    fn stochastic(problem: &LogisticProblem, solver: Solver, max_epochs: usize, seed: u64) -> Self {
        let rows = problem.rows;
        let (n, p) = (rows.len(), rows.n_features);
        let nf = n as f64;
        let max_sq = rows.rows.iter().map(|r| sq_norm(r)).fold(0.0, f64::max);
        let lipschitz = 0.25 * (max_sq + 1.0) + problem.inv_c / nf;
        let eta = match solver {
            Solver::Saga => 1.0 / (3.0 * lipschitz),
            _ => 1.0 / lipschitz,
        };
        let a = 1.0 - eta * problem.inv_c / nf;
        let cstep = eta / nf;
        let catch_up = |wj: f64, sj: f64, k: u64| -> f64 {
            if k == 0 {
                return wj;
            }
            let ak = a.powf(k as f64);
            let geom = if a < 1.0 {
                (1.0 - ak) / (1.0 - a)
            } else {
                k as f64
            };
            ak * wj - cstep * sj * geom
        };
        let mut w = vec![0.0; p];
        let mut s = vec![0.0; p];
        let mut last = vec![0u64; p];
        let (mut b, mut sb) = (0.0, 0.0);
        let mut memory = vec![0.0; n];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut step: u64 = 0;
        let (f0, g0) = problem.eval(&vec![0.0; p + 1]);
        let mut history = vec![f0];
        let mut gradient_norm = norm(&g0);
        let mut iterations = 0;
        while iterations < max_epochs && gradient_norm >= LR_GRADIENT_TOL {
            for _ in 0..n {
                let i = rng.gen_range(0..n);
                let row = &rows.rows[i];
                for &(f, _) in row {
                    w[f] = catch_up(w[f], s[f], step - last[f]);
                    last[f] = step;
                }
                let z = sparse_dot(row, &w) + b;
                let gi = sigmoid(z) - problem.y[i];
                let d = gi - memory[i];
                memory[i] = gi;
                match solver {
                    Solver::Saga => {
                        for &(f, v) in row {
                            w[f] = a * w[f] - cstep * s[f] - eta * d * v;
                            s[f] += d * v;
                            last[f] = step + 1;
                        }
                        b -= eta * (d + sb / nf);
                        sb += d;
                    }
                    _ => {
                        for &(f, v) in row {
                            s[f] += d * v;
                            w[f] = a * w[f] - cstep * s[f];
                            last[f] = step + 1;
                        }
                        sb += d;
                        b -= cstep * sb;
                    }
                }
                step += 1;
            }
            for f in 0..p {
                w[f] = catch_up(w[f], s[f], step - last[f]);
                last[f] = step;
            }
            let mut theta = w.clone();
            theta.push(b);
            let (fv, g) = problem.eval(&theta);
            history.push(fv);
            gradient_norm = norm(&g);
            iterations += 1;
        }
        LogisticRegression {
            solver,
            weights: w,
            bias: b,
            loss_history: history,
            iterations,
            converged: gradient_norm < LR_GRADIENT_TOL,
            gradient_norm,
        }
    }

    fn decision(&self, row: &[(usize, f64)]) -> f64 {
        sparse_dot(row, &self.weights) + self.bias
    }
}

// ---------------------------------------------------------------- models

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Estimator {
    Dt(DecisionTree),
    Rf(RandomForest),
    Nb(NaiveBayes),
    Svm(SupportVectorMachine),
    Lr(LogisticRegression),
}

/// A fitted classifier together with its spec and feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ClassifierSpec,
    pub n_features: usize,
    pub estimator: Estimator,
}

/// One prediction. `score` is the leaf share of `true` (dt), the share of
/// trees voting `true` (rf), the decision value (svm) or `P(true)` (nb, lr);
/// `probability` is set only for nb and lr.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: bool,
    pub score: f64,
    pub probability: Option<f64>,
}

/// Fit a classifier on the rows of `x` with labels `y`.
pub fn train(spec: &ClassifierSpec, x: &TfidfMatrix, y: &[bool]) -> Result<Model, ClassifyError> {
    spec.validate()?;
    if x.n_docs() != y.len() {
        return Err(ClassifyError::LengthMismatch {
            left: x.n_docs(),
            right: y.len(),
        });
    }
    if y.is_empty() {
        return Err(ClassifyError::EmptyInput);
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(ClassifyError::SingleClass);
    }
    let rows = Rows::from_matrix(x)?;
    let estimator = match spec.kind {
        ClassifierKind::Dt => {
            let params = TreeParams {
                max_depth: spec.int_at_least("max_depth", 1)?,
                min_samples_leaf: spec.int_at_least("min_samples_leaf", 1)? as f64,
                max_features: None,
            };
            let columns = column_index(&rows);
            Estimator::Dt(grow_tree(
                &rows,
                &columns,
                y,
                &vec![1.0; y.len()],
                &params,
                None,
            ))
        }
        ClassifierKind::Rf => {
            let params = TreeParams {
                max_depth: spec.int_at_least("max_depth", 1)?,
                min_samples_leaf: spec.int_at_least("min_samples_leaf", 1)? as f64,
                max_features: spec
                    .max_features(rows.n_features)?
                    .filter(|&k| k < rows.n_features),
            };
            let bootstrap = spec.boolean("bootstrap")?;
            let n_trees = spec.int_at_least("n_estimators", 1)?;
            let columns = column_index(&rows);
            let n = y.len();
            let trees = (0..n_trees)
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                    rng.set_stream(t as u64);
                    let mut weights = vec![if bootstrap { 0.0 } else { 1.0 }; n];
                    if bootstrap {
                        for _ in 0..n {
                            weights[rng.gen_range(0..n)] += 1.0;
                        }
                    }
                    grow_tree(&rows, &columns, y, &weights, &params, Some(&mut rng))
                })
                .collect();
            Estimator::Rf(RandomForest { trees })
        }
        ClassifierKind::Nb => Estimator::Nb(NaiveBayes::fit(&rows, y, spec.positive("alpha")?)?),
        ClassifierKind::Svm => {
            let kernel = match spec.choice("kernel", &["rbf", "poly", "linear"])?.as_str() {
                "linear" => Kernel::Linear,
                other => {
                    let gamma = match spec.gamma()? {
                        Some(g) => g,
                        None => scale_gamma(&rows),
                    };
                    if other == "rbf" {
                        Kernel::Rbf { gamma }
                    } else {
                        Kernel::Poly {
                            gamma,
                            degree: spec.int_at_least("degree", 1)? as u32,
                        }
                    }
                }
            };
            Estimator::Svm(SupportVectorMachine::fit(
                &rows,
                y,
                kernel,
                spec.positive("C")?,
                spec.int_at_least("max_iter", 1)?,
                spec.seed,
            ))
        }
        ClassifierKind::Lr => {
            let solver = match spec.choice("solver", &["sag", "saga", "lbfgs"])?.as_str() {
                "sag" => Solver::Sag,
                "saga" => Solver::Saga,
                _ => Solver::Lbfgs,
            };
            Estimator::Lr(LogisticRegression::fit(
                &rows,
                y,
                solver,
                spec.positive("C")?,
                spec.int_at_least("max_iter", 1)?,
                spec.seed,
            ))
        }
    };
    Ok(Model {
        spec: spec.clone(),
        n_features: rows.n_features,
        estimator,
    })
}

/// `1 / (n_features * var(X))` over all dense entries, 1 when X is constant.
fn scale_gamma(rows: &Rows) -> f64 {
    let cells = (rows.len() * rows.n_features) as f64;
    let (sum, sq) = rows
        .rows
        .iter()
        .flatten()
        .fold((0.0, 0.0), |(s, q), &(_, v)| (s + v, q + v * v));
    let var = sq / cells - (sum / cells).powi(2);
    if var > 0.0 {
        1.0 / (rows.n_features as f64 * var)
    } else {
        1.0
    }
}

/// Predict every row of `x`.
pub fn predict(model: &Model, x: &TfidfMatrix) -> Result<Vec<Prediction>, ClassifyError> {
    if x.n_features() != model.n_features {
        return Err(ClassifyError::DimensionMismatch {
            expected: model.n_features,
            got: x.n_features(),
        });
    }
    let rows = Rows::from_matrix(x)?;
    Ok(rows
        .rows
        .iter()
        .map(|row| match &model.estimator {
            Estimator::Dt(tree) => {
                let p = tree.leaf_p_true(row);
                Prediction {
                    label: p > 0.5,
                    score: p,
                    probability: None,
                }
            }
            Estimator::Rf(forest) => {
                let votes = forest
                    .trees
                    .iter()
                    .filter(|t| t.leaf_p_true(row) > 0.5)
                    .count();
                Prediction {
                    label: 2 * votes > forest.trees.len(),
                    score: votes as f64 / forest.trees.len() as f64,
                    probability: None,
                }
            }
            Estimator::Nb(nb) => {
                let [f, t] = nb.joint_log_likelihood(row);
                let p = nb.prob_true(row);
                Prediction {
                    label: t > f,
                    score: p,
                    probability: Some(p),
                }
            }
            Estimator::Svm(svm) => {
                let d = svm.decision(row);
                Prediction {
                    label: d > 0.0,
                    score: d,
                    probability: None,
                }
            }
            Estimator::Lr(lr) => {
                let z = lr.decision(row);
                let p = sigmoid(z);
                Prediction {
                    label: z > 0.0,
                    score: p,
                    probability: Some(p),
                }
            }
        })
        .collect())
}

/// Labels only.
pub fn predict_labels(model: &Model, x: &TfidfMatrix) -> Result<Vec<bool>, ClassifyError> {
    Ok(predict(model, x)?.into_iter().map(|p| p.label).collect())
}

// ---------------------------------------------------------------- cross-validation

/// Stratified `k`-fold partition: each class is shuffled with the seed and
/// dealt round-robin, continuing the deal across classes, so fold sizes and
/// per-fold class counts differ by at most one. Folds are sorted.
pub fn stratified_folds(y: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, ClassifyError> {
    if k < 2 {
        return Err(ClassifyError::TooFewFolds(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for label in [true, false] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == label).collect();
        if idx.len() < k {
            return Err(ClassifyError::ClassTooSmall {
                label,
                count: idx.len(),
                folds: k,
            });
        }
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<Vec<usize>>,
    pub fold_metrics: Vec<EvalMetrics>,
    pub mean_accuracy: f64,
    pub mean_macro_f1: f64,
}

fn cv_with_folds(
    spec: &ClassifierSpec,
    x: &TfidfMatrix,
    y: &[bool],
    folds: &[Vec<usize>],
) -> Result<CvResult, ClassifyError> {
    let n = y.len();
    let mut fold_metrics = Vec::with_capacity(folds.len());
    for (f, test) in folds.iter().enumerate() {
        let fold_spec = ClassifierSpec {
            seed: fold_seed(spec.seed, f),
            ..spec.clone()
        };
        let mut in_test = vec![false; n];
        test.iter().for_each(|&i| in_test[i] = true);
        let train_idx: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
        let y_train: Vec<bool> = train_idx.iter().map(|&i| y[i]).collect();
        let model = train(&fold_spec, &x.select(&train_idx), &y_train)?;
        let pred = predict_labels(&model, &x.select(test))?;
        let truth: Vec<bool> = test.iter().map(|&i| y[i]).collect();
        fold_metrics.push(evaluate(&pred, &truth)?);
    }
    let k = fold_metrics.len() as f64;
    Ok(CvResult {
        folds: folds.to_vec(),
        mean_accuracy: fold_metrics.iter().map(|m| m.accuracy).sum::<f64>() / k,
        mean_macro_f1: fold_metrics.iter().map(|m| m.macro_f1()).sum::<f64>() / k,
        fold_metrics,
    })
}

/// Training seed for fold `fold` of a cross-validation run of a spec
/// seeded with `spec_seed`.
pub fn fold_seed(spec_seed: u64, fold: usize) -> u64 {
    seed::mix(spec_seed, fold as u64)
}

/// Spec seed for grid cell `cell` of a search run with `seed`.
pub fn cell_seed(seed: u64, cell: usize) -> u64 {
    seed::mix(seed ^ 0x6772_6964, cell as u64)
}

/// Stratified `k`-fold cross-validation of `spec`. Folds come from `seed`;
/// fold `f` trains with [`fold_seed`]`(spec.seed, f)`.
pub fn kfold_cv(
    spec: &ClassifierSpec,
    x: &TfidfMatrix,
    y: &[bool],
    k: usize,
    seed: u64,
) -> Result<CvResult, ClassifyError> {
    if x.n_docs() != y.len() {
        return Err(ClassifyError::LengthMismatch {
            left: x.n_docs(),
            right: y.len(),
        });
    }
    let folds = stratified_folds(y, k, seed)?;
    cv_with_folds(spec, x, y, &folds)
}

// ---------------------------------------------------------------- grid search

/// Hyperparameter axes for one classifier kind. Cells enumerate the
/// Cartesian product with the last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub kind: ClassifierKind,
    pub axes: Vec<(String, Vec<ParamValue>)>,
}

impl ParamGrid {
    /// The bundled search grids.
    pub fn bundled(kind: ClassifierKind) -> Self {
        use ParamValue::*;
        let ints = |v: &[i64]| v.iter().map(|&i| Int(i)).collect::<Vec<_>>();
        let floats = |v: &[f64]| v.iter().map(|&f| Float(f)).collect::<Vec<_>>();
        let texts = |v: &[&str]| v.iter().map(|&s| Text(s.into())).collect::<Vec<_>>();
        let axes = match kind {
            ClassifierKind::Dt => vec![
                ("max_depth", ints(&[5, 10, 20, 40, 60])),
                ("min_samples_leaf", ints(&[1, 2, 4])),
            ],
            ClassifierKind::Rf => vec![
                ("n_estimators", ints(&[100, 200, 300, 400])),
                ("max_depth", ints(&[10, 20, 40, 80, 100])),
                ("min_samples_leaf", ints(&[1, 2, 4])),
            ],
            ClassifierKind::Nb => vec![("alpha", floats(&[0.01, 0.05, 0.1, 0.2, 0.5, 1.0]))],
            ClassifierKind::Svm => vec![
                ("kernel", texts(&["rbf", "poly", "linear"])),
                ("C", floats(&[0.1, 0.5, 1.0, 2.0, 10.0])),
                ("max_iter", ints(&[100, 200, 500, 1000, 1200])),
            ],
            ClassifierKind::Lr => vec![
                ("solver", texts(&["sag", "saga", "lbfgs"])),
                ("C", floats(&[0.1, 0.5, 1.0, 2.0, 5.0, 10.0])),
                ("max_iter", ints(&[10, 20, 50, 100, 200])),
            ],
        };
        ParamGrid {
            kind,
            axes: axes.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        if self.axes.is_empty() {
            0
        } else {
            self.axes.iter().map(|(_, v)| v.len()).product()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell `index` as `(name, value)` pairs in axis order.
    pub fn cell(&self, index: usize) -> Vec<(String, ParamValue)> {
        let mut rem = index;
        let mut out = vec![(String::new(), ParamValue::Bool(false)); self.axes.len()];
        for (slot, (name, values)) in self.axes.iter().enumerate().rev() {
            out[slot] = (name.clone(), values[rem % values.len()].clone());
            rem /= values.len();
        }
        out
    }

    /// Spec for cell `index`: kind defaults overridden by the cell values.
    pub fn spec(&self, index: usize, seed: u64) -> Result<ClassifierSpec, ClassifyError> {
        let mut spec = ClassifierSpec::new(self.kind, seed);
        for (name, value) in self.cell(index) {
            spec = spec.with(&name, value)?;
        }
        Ok(spec)
    }
}

/// Parse grids from TOML: one table per kind, each key an axis holding an
/// array of values, in file order.
///
/// ```toml
/// [nb]
/// alpha = [0.1, 1.0]
/// ```
pub fn parse_grids(text: &str) -> Result<Vec<ParamGrid>, ClassifyError> {
    let doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ClassifyError::BadGrid(e.to_string()))?;
    let mut out = Vec::new();
    for (kind_name, body) in doc {
        let kind: ClassifierKind = kind_name.parse()?;
        let table = body
            .as_table()
            .ok_or_else(|| ClassifyError::BadGrid(format!("[{kind_name}] must be a table")))?;
        let mut axes = Vec::new();
        for (name, values) in table {
            let arr = values.as_array().ok_or_else(|| {
                ClassifyError::BadGrid(format!("{kind_name}.{name} must be an array"))
            })?;
            if arr.is_empty() {
                return Err(ClassifyError::EmptyGrid);
            }
            let vals = arr
                .iter()
                .map(|v| match v {
                    toml::Value::Integer(i) => Ok(ParamValue::Int(*i)),
                    toml::Value::Float(f) => Ok(ParamValue::Float(*f)),
                    toml::Value::String(s) => Ok(ParamValue::Text(s.clone())),
                    toml::Value::Boolean(b) => Ok(ParamValue::Bool(*b)),
                    other => Err(ClassifyError::BadGrid(format!(
                        "{kind_name}.{name}: unsupported value {other}"
                    ))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            axes.push((name.clone(), vals));
        }
        let grid = ParamGrid { kind, axes };
        for i in 0..grid.len() {
            grid.spec(i, 0)?;
        }
        out.push(grid);
    }
    Ok(out)
}

/// Outcome of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub index: usize,
    pub spec: ClassifierSpec,
    pub mean_accuracy: Option<f64>,
    pub mean_macro_f1: Option<f64>,
    pub fold_metrics: Vec<EvalMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: ClassifierSpec,
    pub best_index: usize,
    pub best_accuracy: f64,
    pub cells: Vec<GridCell>,
}

/// Evaluate every grid cell with the same stratified folds (from `seed`) and
/// pick the highest mean CV accuracy; ties go to the earliest cell. Cell `i`
/// is the spec `grid.spec(i, cell_seed(seed, i))`, so its result equals
/// `kfold_cv` of that spec with `seed`. Cells whose training fails are
/// recorded and skipped.
pub fn grid_search(
    grid: &ParamGrid,
    x: &TfidfMatrix,
    y: &[bool],
    k: usize,
    seed: u64,
) -> Result<GridSearchResult, ClassifyError> {
    if grid.is_empty() {
        return Err(ClassifyError::EmptyGrid);
    }
    if x.n_docs() != y.len() {
        return Err(ClassifyError::LengthMismatch {
            left: x.n_docs(),
            right: y.len(),
        });
    }
    let folds = stratified_folds(y, k, seed)?;
    let cells: Vec<GridCell> = (0..grid.len())
        .into_par_iter()
        .map(|index| {
            let spec = match grid.spec(index, cell_seed(seed, index)) {
                Ok(s) => s,
                Err(e) => {
                    return GridCell {
                        index,
                        spec: ClassifierSpec::new(grid.kind, seed),
                        mean_accuracy: None,
                        mean_macro_f1: None,
                        fold_metrics: Vec::new(),
                        error: Some(e.to_string()),
                    }
                }
            };
            match cv_with_folds(&spec, x, y, &folds) {
                Ok(cv) => GridCell {
                    index,
                    spec,
                    mean_accuracy: Some(cv.mean_accuracy),
                    mean_macro_f1: Some(cv.mean_macro_f1),
                    fold_metrics: cv.fold_metrics,
                    error: None,
                },
                Err(e) => GridCell {
                    index,
                    spec,
                    mean_accuracy: None,
                    mean_macro_f1: None,
                    fold_metrics: Vec::new(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for cell in &cells {
        if let Some(acc) = cell.mean_accuracy {
            if best.is_none_or(|(_, b)| acc > b) {
                best = Some((cell.index, acc));
            }
        }
    }
    let (best_index, best_accuracy) = best.ok_or(ClassifyError::AllCellsFailed)?;
    Ok(GridSearchResult {
        best: cells[best_index].spec.clone(),
        best_index,
        best_accuracy,
        cells,
    })
}

// ---------------------------------------------------------------- external predictions

/// Probabilities from an external classifier.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalPredictions {
    pub prob_true: BTreeMap<String, f64>,
    pub report: ValidationReport,
    /// Review ids absent from the known set.
    pub skipped: Vec<String>,
}

impl ExternalPredictions {
    pub fn label(&self, review_id: &str) -> Option<bool> {
        self.prob_true.get(review_id).map(|&p| external_label(p))
    }
}

/// `prob_true >= 0.5` is `true`.
pub fn external_label(prob_true: f64) -> bool {
    prob_true >= 0.5
}

/// Read `review_id,prob_true`. Out-of-range or unparseable probabilities
/// are row errors; with `known` given, other review ids are skipped.
pub fn load_external_predictions<R: Read>(
    reader: R,
    source_name: &str,
    known: Option<&BTreeSet<String>>,
) -> Result<ExternalPredictions, ClassifyError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let csv_err = |e: csv::Error| ClassifyError::Csv {
        source_name: source_name.into(),
        message: e.to_string(),
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let find = |col: &str| {
        headers
            .iter()
            .position(|h| h.trim() == col)
            .ok_or_else(|| ClassifyError::MissingColumn {
                source_name: source_name.into(),
                column: col.into(),
            })
    };
    let (id_col, p_col) = (find("review_id")?, find("prob_true")?);
    let mut out = ExternalPredictions::default();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let id = rec.get(id_col).unwrap_or("").trim().to_string();
        let raw = rec.get(p_col).unwrap_or("").trim();
        let prob = match raw.parse::<f64>() {
            Ok(p) if (0.0..=1.0).contains(&p) => p,
            Ok(p) => {
                out.report.issues.push(ValidationIssue {
                    source: source_name.into(),
                    row: Some(i + 1),
                    column: Some("prob_true".into()),
                    kind: IssueKind::Range,
                    message: format!("probability {p} outside [0, 1]"),
                });
                continue;
            }
            Err(_) => {
                out.report.issues.push(ValidationIssue {
                    source: source_name.into(),
                    row: Some(i + 1),
                    column: Some("prob_true".into()),
                    kind: IssueKind::Parse,
                    message: format!("unparseable probability {raw:?}"),
                });
                continue;
            }
        };
        if known.is_some_and(|k| !k.contains(&id)) {
            out.skipped.push(id);
            continue;
        }
        out.prob_true.insert(id, prob);
    }
    Ok(out)
}
