//! Sentence segmentation, tokenization and TF-IDF weighting.
//!
//! Segmentation rules are normative: external sentence scores are keyed by
//! `(review_id, sentence_index)`, so the indices produced here must stay
//! stable across releases.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("corpus is empty: no document contains a token")]
    EmptyCorpus,
    #[error("no documents supplied")]
    NoDocuments,
    #[error("csv export failed: {0}")]
    Export(#[from] csv::Error),
}

/// One sentence of a review with its byte span in the (normalized) text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub review_id: String,
    pub index: usize,
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub density_related: bool,
}

fn is_delimiter(c: char) -> bool {
    matches!(c, '.' | ';' | '?' | '!' | '\u{2026}')
}

/// Byte spans of the sentences in `text`.
///
/// A sentence runs from its first non-whitespace character through the run
/// of delimiters (`.`, `;`, `?`, `!`, `...`, `…`) that closes it. Runs of
/// consecutive delimiters collapse into one boundary. Fragments with no
/// alphanumeric content are folded into the neighbouring sentence so every
/// returned span carries words.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let mut raw: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if start.is_none() {
            if c.is_whitespace() {
                continue;
            }
            start = Some(i);
        }
        if is_delimiter(c) {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = chars.peek() {
                if !is_delimiter(d) {
                    break;
                }
                end = j + d.len_utf8();
                chars.next();
            }
            raw.push((start.take().unwrap(), end));
        }
    }
    if let Some(s) = start {
        let end = text.trim_end().len();
        if end > s {
            raw.push((s, end));
        }
    }

    let has_word = |(s, e): (usize, usize)| text[s..e].chars().any(char::is_alphanumeric);
    let mut spans: Vec<(usize, usize)> = Vec::with_capacity(raw.len());
    let mut pending: Option<usize> = None;
    for span in raw {
        if has_word(span) {
            let s = pending.take().unwrap_or(span.0);
            spans.push((s, span.1));
        } else if let Some(last) = spans.last_mut() {
            last.1 = span.1;
        } else if pending.is_none() {
            pending = Some(span.0);
        }
    }
    if spans.is_empty() {
        let trimmed = text.trim();
        if !trimmed.is_empty() {
            let s = text.len() - text.trim_start().len();
            spans.push((s, s + trimmed.len()));
        }
    }
    spans
}

/// Split `text` into sentences; see [`sentence_spans`] for the rules.
pub fn segment_sentences(text: &str) -> Vec<String> {
    sentence_spans(text)
        .into_iter()
        .map(|(s, e)| text[s..e].to_string())
        .collect()
}

/// Segment a review into [`Sentence`]s. `density_related` starts false and is
/// set by the caller after lexicon matching.
pub fn segment_review(review_id: &str, text: &str) -> Vec<Sentence> {
    sentence_spans(text)
        .into_iter()
        .enumerate()
        .map(|(index, (start, end))| Sentence {
            review_id: review_id.to_string(),
            index,
            text: text[start..end].to_string(),
            start,
            end,
            density_related: false,
        })
        .collect()
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Lowercase word tokens. Anything that is not alphanumeric separates tokens,
/// except an apostrophe with word characters on both sides ("don't").
/// Typographic apostrophes are folded to `'`.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if is_apostrophe(c)
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            current.push('\'');
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Raw term counts. `rows[d]` is sorted by column index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocTermMatrix {
    pub vocabulary: Vec<String>,
    pub doc_ids: Vec<String>,
    pub rows: Vec<Vec<(usize, u32)>>,
}

impl DocTermMatrix {
    pub fn n_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_terms(&self) -> usize {
        self.vocabulary.len()
    }

    /// Number of documents containing each vocabulary term.
    pub fn document_frequency(&self) -> Vec<usize> {
        let mut df = vec![0usize; self.vocabulary.len()];
        for row in &self.rows {
            for &(col, _) in row {
                df[col] += 1;
            }
        }
        df
    }

    pub fn dense_row(&self, doc: usize) -> Vec<u32> {
        let mut out = vec![0; self.vocabulary.len()];
        for &(col, count) in &self.rows[doc] {
            out[col] = count;
        }
        out
    }

    /// Debug export: header `doc_id,<token>...`, one dense row per document.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TextError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["doc_id".to_string()];
        header.extend(self.vocabulary.iter().cloned());
        w.write_record(&header)?;
        for (d, id) in self.doc_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.dense_row(d).iter().map(u32::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Build raw counts over already tokenized documents.
///
/// Tokens appearing in fewer than `min_df` documents are left out of the
/// vocabulary.
pub fn build_doc_term_matrix_from_tokens(
    docs: &[(String, Vec<String>)],
    min_df: usize,
) -> Result<DocTermMatrix, TextError> {
    if docs.is_empty() {
        return Err(TextError::NoDocuments);
    }
    let counts: Vec<BTreeMap<&str, u32>> = docs
        .par_iter()
        .map(|(_, tokens)| {
            let mut m = BTreeMap::new();
            for t in tokens {
                *m.entry(t.as_str()).or_insert(0) += 1;
            }
            m
        })
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for m in &counts {
        for t in m.keys() {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let vocabulary: Vec<String> = df
        .iter()
        .filter(|(_, &n)| n >= min_df.max(1))
        .map(|(t, _)| t.to_string())
        .collect();
    if vocabulary.is_empty() {
        return Err(TextError::EmptyCorpus);
    }
    let index: BTreeMap<&str, usize> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let rows = counts
        .iter()
        .map(|m| {
            m.iter()
                .filter_map(|(t, &c)| index.get(t).map(|&i| (i, c)))
                .collect()
        })
        .collect();
    Ok(DocTermMatrix {
        vocabulary,
        doc_ids: docs.iter().map(|(id, _)| id.clone()).collect(),
        rows,
    })
}

/// Tokenize and count `(doc_id, text)` pairs.
pub fn build_doc_term_matrix(docs: &[(String, String)]) -> Result<DocTermMatrix, TextError> {
    let tokenized: Vec<(String, Vec<String>)> = docs
        .par_iter()
        .map(|(id, text)| (id.clone(), tokenize(text)))
        .collect();
    build_doc_term_matrix_from_tokens(&tokenized, 1)
}

/// Real-valued sparse document matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfMatrix {
    pub vocabulary: Vec<String>,
    pub doc_ids: Vec<String>,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub normalized: bool,
}

impl TfidfMatrix {
    pub fn n_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn dense_row(&self, doc: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.vocabulary.len()];
        for &(col, w) in &self.rows[doc] {
            out[col] = w;
        }
        out
    }

    /// Row subset in the given order.
    pub fn select(&self, idx: &[usize]) -> TfidfMatrix {
        TfidfMatrix {
            vocabulary: self.vocabulary.clone(),
            doc_ids: idx.iter().map(|&i| self.doc_ids[i].clone()).collect(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            normalized: self.normalized,
        }
    }

    /// Build from dense rows; zero entries are dropped.
    pub fn from_dense(doc_ids: Vec<String>, vocabulary: Vec<String>, dense: &[Vec<f64>]) -> Self {
        let rows = dense
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| (i, *v))
                    .collect()
            })
            .collect();
        TfidfMatrix {
            vocabulary,
            doc_ids,
            rows,
            normalized: false,
        }
    }
}

/// Fitted vocabulary and inverse document frequencies.
///
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, and a document's weight for `t`
/// is `tf(d, t) * idf(t)` followed by L2 row normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    pub vocabulary: Vec<String>,
    pub idf: Vec<f64>,
}

impl TfidfVectorizer {
    pub fn fit(m: &DocTermMatrix) -> Self {
        let n = m.n_docs() as f64;
        let idf = m
            .document_frequency()
            .into_iter()
            .map(|df| ((1.0 + n) / (1.0 + df as f64)).ln() + 1.0)
            .collect();
        TfidfVectorizer {
            vocabulary: m.vocabulary.clone(),
            idf,
        }
    }

    fn weigh(&self, counts: impl Iterator<Item = (usize, u32)>) -> Vec<(usize, f64)> {
        let mut row: Vec<(usize, f64)> = counts
            .map(|(col, c)| (col, c as f64 * self.idf[col]))
            .collect();
        let norm = row.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut row {
                *w /= norm;
            }
        }
        row
    }

    /// Weigh a matrix that shares this vectorizer's vocabulary.
    pub fn transform(&self, m: &DocTermMatrix) -> TfidfMatrix {
        TfidfMatrix {
            vocabulary: self.vocabulary.clone(),
            doc_ids: m.doc_ids.clone(),
            rows: m
                .rows
                .iter()
                .map(|r| self.weigh(r.iter().copied()))
                .collect(),
            normalized: true,
        }
    }

    /// Weigh new tokenized documents; tokens outside the vocabulary are dropped.
    pub fn transform_tokens(&self, docs: &[(String, Vec<String>)]) -> TfidfMatrix {
        let rows = docs
            .par_iter()
            .map(|(_, tokens)| {
                let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
                for t in tokens {
                    if let Ok(col) = self.vocabulary.binary_search(t) {
                        *counts.entry(col).or_insert(0) += 1;
                    }
                }
                self.weigh(counts.into_iter())
            })
            .collect();
        TfidfMatrix {
            vocabulary: self.vocabulary.clone(),
            doc_ids: docs.iter().map(|(id, _)| id.clone()).collect(),
            rows,
            normalized: true,
        }
    }
}

/// Fit IDF weights on `m` and transform it.
pub fn tfidf_transform(m: &DocTermMatrix) -> TfidfMatrix {
    TfidfVectorizer::fit(m).transform(m)
}

/// Distinct tokens of a document, for "documents containing" counts.
pub fn token_set(tokens: &[String]) -> BTreeSet<&str> {
    tokens.iter().map(String::as_str).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_sentences() {
        let s = segment_sentences("Great spot. Parking can be a pain!");
        assert_eq!(s, vec!["Great spot.", "Parking can be a pain!"]);
    }

    #[test]
    fn ellipsis_is_one_delimiter() {
        assert_eq!(segment_sentences("Wow..."), vec!["Wow..."]);
        assert_eq!(segment_sentences("Wow… nice"), vec!["Wow…", "nice"]);
        assert_eq!(segment_sentences("Really?! Yes"), vec!["Really?!", "Yes"]);
    }

    #[test]
    fn whole_text_without_delimiters() {
        assert_eq!(
            segment_sentences("no delimiters here"),
            vec!["no delimiters here"]
        );
        assert!(segment_sentences("   ").is_empty());
        assert!(segment_sentences("").is_empty());
    }

    #[test]
    fn punctuation_only_fragments_fold_into_neighbours() {
        assert_eq!(segment_sentences("Hi. . ."), vec!["Hi. . ."]);
        assert_eq!(segment_sentences("!! Hi."), vec!["!! Hi."]);
        assert_eq!(segment_sentences("..."), vec!["..."]);
        assert_eq!(
            segment_sentences("Parking: parking was reasonable."),
            vec!["Parking: parking was reasonable."]
        );
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(
            tokenize("Close-to Downtown!"),
            vec!["close", "to", "downtown"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("it's"), vec!["it's"]);
        assert_eq!(tokenize("don\u{2019}t 'quoted'"), vec!["don't", "quoted"]);
        assert_eq!(tokenize("rock'n'roll 3.5"), vec!["rock'n'roll", "3", "5"]);
    }

    #[test]
    fn doc_term_matrix_small() {
        let docs = vec![
            ("d1".to_string(), "a b".to_string()),
            ("d2".to_string(), "b".to_string()),
        ];
        let m = build_doc_term_matrix(&docs).unwrap();
        assert_eq!(m.vocabulary, vec!["a", "b"]);
        assert_eq!(m.dense_row(0), vec![1, 1]);
        assert_eq!(m.dense_row(1), vec![0, 1]);
    }

    #[test]
    fn doc_term_matrix_single_and_empty() {
        let one = vec![("d".to_string(), "x y x".to_string())];
        let m = build_doc_term_matrix(&one).unwrap();
        assert_eq!(m.vocabulary, vec!["x", "y"]);
        assert_eq!(m.dense_row(0), vec![2, 1]);
        let empty = vec![("d".to_string(), "  ...".to_string())];
        assert!(matches!(
            build_doc_term_matrix(&empty),
            Err(TextError::EmptyCorpus)
        ));
        assert!(matches!(
            build_doc_term_matrix(&[]),
            Err(TextError::NoDocuments)
        ));
    }

    #[test]
    fn min_df_prunes() {
        let docs = vec![
            ("a".to_string(), vec!["x".to_string(), "y".to_string()]),
            ("b".to_string(), vec!["x".to_string()]),
        ];
        let m = build_doc_term_matrix_from_tokens(&docs, 2).unwrap();
        assert_eq!(m.vocabulary, vec!["x"]);
    }

    #[test]
    fn tfidf_single_token_doc_is_unit() {
        let docs = vec![
            ("d1".to_string(), "parking parking".to_string()),
            ("d2".to_string(), "traffic jam".to_string()),
        ];
        let t = tfidf_transform(&build_doc_term_matrix(&docs).unwrap());
        assert_eq!(t.rows[0].len(), 1);
        assert!((t.rows[0][0].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tfidf_disjoint_docs_orthogonal() {
        let docs = vec![
            ("d1".to_string(), "a b".to_string()),
            ("d2".to_string(), "c d".to_string()),
        ];
        let t = tfidf_transform(&build_doc_term_matrix(&docs).unwrap());
        let (r0, r1) = (t.dense_row(0), t.dense_row(1));
        let dot: f64 = r0.iter().zip(&r1).map(|(a, b)| a * b).sum();
        assert_eq!(dot, 0.0);
    }

    #[test]
    fn transform_drops_unknown_tokens() {
        let docs = vec![("d1".to_string(), "a b".to_string())];
        let v = TfidfVectorizer::fit(&build_doc_term_matrix(&docs).unwrap());
        let t = v.transform_tokens(&[("n".to_string(), vec!["zzz".to_string()])]);
        assert!(t.rows[0].is_empty());
    }

    #[test]
    fn csv_export_has_header() {
        let docs = vec![("d1".to_string(), "a b".to_string())];
        let m = build_doc_term_matrix(&docs).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "doc_id,a,b\nd1,1,1\n");
    }

    proptest! {
        #[test]
        fn segmentation_covers_input(text in "[a-z .;?!…\n]{0,60}") {
            let spans = sentence_spans(&text);
            let mut prev = 0;
            for &(s, e) in &spans {
                prop_assert!(s >= prev && e > s);
                prop_assert!(text[prev..s].trim().is_empty());
                prev = e;
            }
            prop_assert!(text[prev..].trim().is_empty());
            if !text.trim().is_empty() {
                prop_assert!(!spans.is_empty());
            }
        }

        #[test]
        fn tfidf_rows_unit_norm(words in proptest::collection::vec("[a-e]{1,2}( [a-e]{1,2}){0,5}", 1..8)) {
            let docs: Vec<(String, String)> = words.iter().enumerate()
                .map(|(i, w)| (format!("d{i}"), w.clone())).collect();
            let t = tfidf_transform(&build_doc_term_matrix(&docs).unwrap());
            for row in &t.rows {
                let n: f64 = row.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
                prop_assert!((n - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn tfidf_permutation_equivariant(words in proptest::collection::vec("[a-d]( [a-d]){0,4}", 2..6)) {
            let docs: Vec<(String, String)> = words.iter().enumerate()
                .map(|(i, w)| (format!("d{i}"), w.clone())).collect();
            let mut rev = docs.clone();
            rev.reverse();
            let a = tfidf_transform(&build_doc_term_matrix(&docs).unwrap());
            let b = tfidf_transform(&build_doc_term_matrix(&rev).unwrap());
            let n = docs.len();
            for i in 0..n {
                prop_assert_eq!(&a.rows[i], &b.rows[n - 1 - i]);
            }
        }
    }
}
