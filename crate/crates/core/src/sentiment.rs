//! Sentence sentiment: argmax labeling of probability triples, a bundled
//! word-list scorer, ingestion of externally computed triples and
//! review-level aggregation.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Read;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{IssueKind, ValidationIssue, ValidationReport};
use crate::textprep::{tokenize, Sentence};

const POSITIVE_WORDS: &str = include_str!("../data/positive_words.txt");
const NEGATIVE_WORDS: &str = include_str!("../data/negative_words.txt");

/// Tolerance on the sum of a probability triple.
pub const TRIPLE_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum SentimentError {
    #[error("invalid triple ({0}, {1}, {2}): probabilities must lie in [0, 1] and sum to 1")]
    InvalidTriple(f64, f64, f64),
    #[error("{source_name}: missing column {column:?}")]
    MissingColumn { source_name: String, column: String },
    #[error("{source_name}: {message}")]
    Csv {
        source_name: String,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentClass {
    Negative,
    Neutral,
    Positive,
}

impl SentimentClass {
    pub fn numeric(self) -> i8 {
        match self {
            SentimentClass::Negative => -1,
            SentimentClass::Neutral => 0,
            SentimentClass::Positive => 1,
        }
    }

    /// Class of a review-level score by its sign.
    pub fn from_sign(value: f64) -> Self {
        if value > 0.0 {
            SentimentClass::Positive
        } else if value < 0.0 {
            SentimentClass::Negative
        } else {
            SentimentClass::Neutral
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentClass::Negative => "negative",
            SentimentClass::Neutral => "neutral",
            SentimentClass::Positive => "positive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentTriple {
    pub p_negative: f64,
    pub p_neutral: f64,
    pub p_positive: f64,
}

impl SentimentTriple {
    pub fn new(p_negative: f64, p_neutral: f64, p_positive: f64) -> Result<Self, SentimentError> {
        let t = SentimentTriple {
            p_negative,
            p_neutral,
            p_positive,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), SentimentError> {
        let ps = [self.p_negative, self.p_neutral, self.p_positive];
        let in_range = ps.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p));
        let sum: f64 = ps.iter().sum();
        if !in_range || (sum - 1.0).abs() > TRIPLE_SUM_TOLERANCE {
            return Err(SentimentError::InvalidTriple(ps[0], ps[1], ps[2]));
        }
        Ok(())
    }

    /// `p_positive - p_negative`, the expected value of the numeric label.
    pub fn expected(&self) -> f64 {
        self.p_positive - self.p_negative
    }
}

/// Highest-probability class. Ties go to neutral first, then negative.
pub fn label_from_triple(t: &SentimentTriple) -> Result<SentimentClass, SentimentError> {
    t.validate()?;
    Ok(argmax(t))
}

fn argmax(t: &SentimentTriple) -> SentimentClass {
    if t.p_neutral >= t.p_negative && t.p_neutral >= t.p_positive {
        SentimentClass::Neutral
    } else if t.p_negative >= t.p_positive {
        SentimentClass::Negative
    } else {
        SentimentClass::Positive
    }
}

const NEGATORS: [&str; 12] = [
    "not", "no", "never", "none", "nobody", "nothing", "neither", "nor", "without", "hardly",
    "barely", "cannot",
];

fn is_negator(token: &str) -> bool {
    NEGATORS.contains(&token) || token.ends_with("n't")
}

fn word_set(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .map(str::to_lowercase)
        .collect()
}

/// Word-list sentiment scorer used when no external scores are supplied.
///
/// Each positive or negative word counts as one hit; a negator within the
/// three preceding tokens flips it. Hits map to a triple by a softmax over
/// `(negative_hits, neutral_baseline, positive_hits)`.
#[derive(Debug, Clone)]
pub struct LexiconScorer {
    positive: HashSet<String>,
    negative: HashSet<String>,
    pub negation_window: usize,
    pub neutral_baseline: f64,
}

impl LexiconScorer {
    pub fn new(positive: HashSet<String>, negative: HashSet<String>) -> Self {
        LexiconScorer {
            positive,
            negative,
            negation_window: 3,
            neutral_baseline: 0.5,
        }
    }

    pub fn bundled() -> &'static LexiconScorer {
        static SCORER: OnceLock<LexiconScorer> = OnceLock::new();
        SCORER
            .get_or_init(|| LexiconScorer::new(word_set(POSITIVE_WORDS), word_set(NEGATIVE_WORDS)))
    }

    pub fn vocabulary_size(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    /// `(positive_hits, negative_hits)` after negation flipping.
    pub fn hits(&self, tokens: &[String]) -> (usize, usize) {
        let (mut pos, mut neg) = (0, 0);
        for (i, t) in tokens.iter().enumerate() {
            let polarity = if self.positive.contains(t) {
                1
            } else if self.negative.contains(t) {
                -1
            } else {
                continue;
            };
            let lo = i.saturating_sub(self.negation_window);
            let negated = tokens[lo..i].iter().any(|w| is_negator(w));
            match (polarity, negated) {
                (1, false) | (-1, true) => pos += 1,
                _ => neg += 1,
            }
        }
        (pos, neg)
    }

    pub fn score_tokens(&self, tokens: &[String]) -> SentimentTriple {
        let (pos, neg) = self.hits(tokens);
        let logits = [neg as f64, self.neutral_baseline, pos as f64];
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        SentimentTriple {
            p_negative: exps[0] / z,
            p_neutral: exps[1] / z,
            p_positive: exps[2] / z,
        }
    }

    pub fn score(&self, sentence: &str) -> SentimentTriple {
        self.score_tokens(&tokenize(sentence))
    }
}

/// Score a sentence with the bundled word lists.
pub fn lexicon_score(sentence: &str) -> SentimentTriple {
    LexiconScorer::bundled().score(sentence)
}

/// `(review_id, sentence_index)`.
pub type SentenceKey = (String, usize);

#[derive(Debug, Clone, Default)]
pub struct ExternalScores {
    pub triples: BTreeMap<SentenceKey, SentimentTriple>,
    pub report: ValidationReport,
    /// Rows whose key is not among the known sentences.
    pub skipped: Vec<SentenceKey>,
}

pub const EXTERNAL_SCORE_COLUMNS: [&str; 5] = [
    "review_id",
    "sentence_index",
    "p_negative",
    "p_neutral",
    "p_positive",
];

/// Read `review_id,sentence_index,p_negative,p_neutral,p_positive`. Rows
/// with invalid triples go to the report; with `known` given, rows for
/// other sentences go to `skipped`.
pub fn read_external_scores<R: Read>(
    reader: R,
    source_name: &str,
    known: Option<&BTreeSet<SentenceKey>>,
) -> Result<ExternalScores, SentimentError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| SentimentError::Csv {
            source_name: source_name.into(),
            message: e.to_string(),
        })?
        .clone();
    let mut pos = Vec::new();
    for col in EXTERNAL_SCORE_COLUMNS {
        pos.push(
            headers
                .iter()
                .position(|h| h.trim() == col)
                .ok_or_else(|| SentimentError::MissingColumn {
                    source_name: source_name.into(),
                    column: col.into(),
                })?,
        );
    }
    let mut out = ExternalScores::default();
    let issue = |row: usize, kind: IssueKind, message: String| ValidationIssue {
        source: source_name.to_string(),
        row: Some(row),
        column: None,
        kind,
        message,
    };
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.report
                    .issues
                    .push(issue(row, IssueKind::Parse, e.to_string()));
                continue;
            }
        };
        let get = |k: usize| rec.get(pos[k]).unwrap_or("").trim();
        let (Ok(index), Ok(pn), Ok(pu), Ok(pp)) = (
            get(1).parse::<usize>(),
            get(2).parse::<f64>(),
            get(3).parse::<f64>(),
            get(4).parse::<f64>(),
        ) else {
            out.report
                .issues
                .push(issue(row, IssueKind::Parse, "unparseable score row".into()));
            continue;
        };
        let triple = match SentimentTriple::new(pn, pu, pp) {
            Ok(t) => t,
            Err(e) => {
                out.report
                    .issues
                    .push(issue(row, IssueKind::Range, e.to_string()));
                continue;
            }
        };
        let key = (get(0).to_string(), index);
        if known.is_some_and(|k| !k.contains(&key)) {
            out.skipped.push(key);
            continue;
        }
        out.triples.insert(key, triple);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    External,
    Lexicon,
}

impl ScoreSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreSource::External => "external",
            ScoreSource::Lexicon => "lexicon",
        }
    }
}

/// Triple for every sentence: the external score when present, the bundled
/// scorer otherwise. The second value counts fallbacks taken while external
/// scores were supplied.
pub fn resolve_triples(
    sentences: &[Sentence],
    external: Option<&BTreeMap<SentenceKey, SentimentTriple>>,
) -> (Vec<(SentimentTriple, ScoreSource)>, usize) {
    let mut fallbacks = 0;
    let resolved = sentences
        .iter()
        .map(|s| {
            let key = (s.review_id.clone(), s.index);
            match external.and_then(|m| m.get(&key)) {
                Some(t) => (*t, ScoreSource::External),
                None => {
                    if external.is_some() {
                        fallbacks += 1;
                    }
                    (lexicon_score(&s.text), ScoreSource::Lexicon)
                }
            }
        })
        .collect();
    (resolved, fallbacks)
}

/// How sentence triples combine into a review score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Mean of the argmax labels' numeric values.
    #[default]
    Label,
    /// Mean of `p_positive - p_negative`.
    Expected,
}

impl AggregationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AggregationMode::Label => "label",
            AggregationMode::Expected => "expected",
        }
    }
}

/// Review score in [-1, 1] over its density-related sentences, or `None`
/// when it has none (the review is not applicable downstream).
pub fn review_sentiment(
    sentences: &[Sentence],
    triples: &[SentimentTriple],
    mode: AggregationMode,
) -> Option<f64> {
    let values: Vec<f64> = sentences
        .iter()
        .zip(triples)
        .filter(|(s, _)| s.density_related)
        .map(|(_, t)| match mode {
            AggregationMode::Label => f64::from(argmax(t).numeric()),
            AggregationMode::Expected => t.expected(),
        })
        .collect();
    if values.is_empty() {
        return None;
    }
    Some((values.iter().sum::<f64>() / values.len() as f64).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(n: f64, u: f64, p: f64) -> SentimentTriple {
        SentimentTriple::new(n, u, p).unwrap()
    }

    fn sentence(i: usize, density: bool) -> Sentence {
        Sentence {
            review_id: "r".into(),
            index: i,
            text: String::new(),
            start: 0,
            end: 0,
            density_related: density,
        }
    }

    #[test]
    fn reference_triples() {
        use SentimentClass::*;
        assert_eq!(
            label_from_triple(&t(0.8505, 0.1366, 0.0129)).unwrap(),
            Negative
        );
        assert_eq!(
            label_from_triple(&t(0.0705, 0.7212, 0.2083)).unwrap(),
            Neutral
        );
        assert_eq!(
            label_from_triple(&t(0.0090, 0.3064, 0.6846)).unwrap(),
            Positive
        );
        let third = 1.0 / 3.0;
        assert_eq!(label_from_triple(&t(third, third, third)).unwrap(), Neutral);
        assert_eq!(label_from_triple(&t(0.45, 0.1, 0.45)).unwrap(), Negative);
    }

    #[test]
    fn invalid_triples() {
        assert!(SentimentTriple::new(0.5, 0.2, 0.1).is_err());
        assert!(SentimentTriple::new(-0.1, 0.6, 0.5).is_err());
        assert!(SentimentTriple::new(f64::NAN, 0.5, 0.5).is_err());
        let bad = SentimentTriple {
            p_negative: 0.5,
            p_neutral: 0.5,
            p_positive: 0.5,
        };
        assert!(label_from_triple(&bad).is_err());
    }

    #[test]
    fn word_lists_loaded() {
        let n = LexiconScorer::bundled().vocabulary_size();
        assert!(n > 1900, "{n}");
    }

    #[test]
    fn lexicon_scorer_cases() {
        let s = lexicon_score("parking was terrible");
        assert_eq!(argmax(&s), SentimentClass::Negative);
        let s = lexicon_score("not bad at all");
        assert!(s.p_positive >= s.p_negative);
        let s = lexicon_score("the lot is on the left");
        assert_eq!(argmax(&s), SentimentClass::Neutral);
        assert!(s.validate().is_ok());
        let s = lexicon_score("It wasn't great, honestly.");
        assert!(s.p_negative > s.p_positive);
    }

    #[test]
    fn external_scores_rows() {
        let csv = "review_id,sentence_index,p_negative,p_neutral,p_positive\n\
                   r1,0,0.1,0.2,0.7\n\
                   r1,1,0.3,0.3,0.2\n\
                   ghost,0,0.2,0.2,0.6\n";
        let known: BTreeSet<SentenceKey> = [
            ("r1".to_string(), 0),
            ("r1".to_string(), 1),
            ("r1".to_string(), 2),
        ]
        .into_iter()
        .collect();
        let ext = read_external_scores(csv.as_bytes(), "s.csv", Some(&known)).unwrap();
        assert_eq!(ext.triples.len(), 1);
        assert_eq!(ext.report.len(), 1);
        assert_eq!(ext.skipped, vec![("ghost".to_string(), 0)]);

        let sentences: Vec<Sentence> = (0..3).map(|i| sentence(i, true)).collect();
        let csv2 = "review_id,sentence_index,p_negative,p_neutral,p_positive\n\
                    r,0,0.1,0.2,0.7\nr,1,0.6,0.3,0.1\n";
        let ext = read_external_scores(csv2.as_bytes(), "s.csv", None).unwrap();
        let (resolved, fallbacks) = resolve_triples(&sentences, Some(&ext.triples));
        assert_eq!(fallbacks, 1);
        assert_eq!(resolved[2].1, ScoreSource::Lexicon);
        assert_eq!(resolved[0].1, ScoreSource::External);
    }

    #[test]
    fn missing_score_column() {
        let csv = "review_id,sentence_index,p_negative,p_positive\n";
        assert!(matches!(
            read_external_scores(csv.as_bytes(), "s.csv", None),
            Err(SentimentError::MissingColumn { .. })
        ));
    }

    #[test]
    fn review_means() {
        let s = vec![sentence(0, true), sentence(1, true)];
        let pos_neg = [t(0.1, 0.2, 0.7), t(0.6, 0.3, 0.1)];
        assert_eq!(
            review_sentiment(&s, &pos_neg, AggregationMode::Label),
            Some(0.0)
        );
        let got = review_sentiment(&s, &pos_neg, AggregationMode::Expected).unwrap();
        assert!((got - 0.05).abs() < 1e-12);
        assert_eq!(
            review_sentiment(&s[..1], &pos_neg[..1], AggregationMode::Label),
            Some(1.0)
        );
        let none = vec![sentence(0, false)];
        assert_eq!(
            review_sentiment(&none, &pos_neg[..1], AggregationMode::Label),
            None
        );
    }

    fn arb_triple() -> impl Strategy<Value = SentimentTriple> {
        (0.001f64..1.0, 0.001f64..1.0, 0.001f64..1.0).prop_map(|(a, b, c)| {
            let z = a + b + c;
            SentimentTriple {
                p_negative: a / z,
                p_neutral: b / z,
                p_positive: c / z,
            }
        })
    }

    proptest! {
        #[test]
        fn review_sentiment_bounded_and_order_free(ts in proptest::collection::vec(arb_triple(), 1..8)) {
            let s: Vec<Sentence> = (0..ts.len()).map(|i| sentence(i, true)).collect();
            for mode in [AggregationMode::Label, AggregationMode::Expected] {
                let v = review_sentiment(&s, &ts, mode).unwrap();
                prop_assert!((-1.0..=1.0).contains(&v));
                let mut rev = ts.clone();
                rev.reverse();
                let w = review_sentiment(&s, &rev, mode).unwrap();
                prop_assert!((v - w).abs() < 1e-12);
            }
        }

        #[test]
        fn raising_a_label_never_lowers_review(ts in proptest::collection::vec(arb_triple(), 1..8), k in 0usize..8) {
            let s: Vec<Sentence> = (0..ts.len()).map(|i| sentence(i, true)).collect();
            let k = k % ts.len();
            let before = review_sentiment(&s, &ts, AggregationMode::Label).unwrap();
            let mut up = ts.clone();
            up[k] = t(0.0, 0.0, 1.0);
            let after = review_sentiment(&s, &up, AggregationMode::Label).unwrap();
            prop_assert!(after >= before);
        }
    }
}
