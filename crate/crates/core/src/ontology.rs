//! Urban-density lexicon, phrase matching and the curation loop.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Review;
use crate::textprep::tokenize;

const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.txt");
const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Longest phrase a lexicon entry may hold, in tokens.
pub const MAX_PHRASE_TOKENS: usize = 4;

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("lexicon is empty")]
    Empty,
    #[error("line {line}: entry {entry:?} has {tokens} tokens (expected 1..={MAX_PHRASE_TOKENS})")]
    BadEntry {
        line: usize,
        entry: String,
        tokens: usize,
    },
    #[error("line {line}: unknown provenance {value:?}")]
    BadProvenance { line: usize, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Seed,
    TopDown,
    BottomUp,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Seed => "seed",
            Provenance::TopDown => "top_down",
            Provenance::BottomUp => "bottom_up",
        })
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seed" => Ok(Provenance::Seed),
            "top_down" => Ok(Provenance::TopDown),
            "bottom_up" => Ok(Provenance::BottomUp),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    /// Tokens joined by single spaces.
    pub phrase: String,
    pub tokens: Vec<String>,
    pub provenance: Provenance,
}

/// Non-fatal findings while reading a lexicon file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LexiconWarning {
    Duplicate { line: usize, entry: String },
}

/// Ordered set of density-indicative phrases.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
}

impl Lexicon {
    /// The 44-entry ontology shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON)
            .expect("bundled lexicon is valid")
            .0
    }

    /// Parse the lexicon file format: one entry per line, `#` starts a
    /// comment, an optional tab-separated second column holds provenance.
    /// Entries are lowercased and deduplicated (with a warning).
    pub fn parse(text: &str) -> Result<(Self, Vec<LexiconWarning>), OntologyError> {
        let mut lexicon = Lexicon::default();
        let mut warnings = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let phrase = cols.next().unwrap_or("").trim();
            let provenance = match cols.next().map(str::trim).filter(|s| !s.is_empty()) {
                Some(p) => p.parse().map_err(|value| OntologyError::BadProvenance {
                    line: line_no,
                    value,
                })?,
                None => Provenance::Seed,
            };
            let tokens = tokenize(phrase);
            if tokens.is_empty() || tokens.len() > MAX_PHRASE_TOKENS {
                return Err(OntologyError::BadEntry {
                    line: line_no,
                    entry: phrase.to_string(),
                    tokens: tokens.len(),
                });
            }
            let entry = tokens.join(" ");
            if lexicon.contains(&entry) {
                warnings.push(LexiconWarning::Duplicate {
                    line: line_no,
                    entry,
                });
                continue;
            }
            lexicon.entries.push(LexiconEntry {
                phrase: entry,
                tokens,
                provenance,
            });
        }
        if lexicon.entries.is_empty() {
            return Err(OntologyError::Empty);
        }
        Ok((lexicon, warnings))
    }

    /// Append `phrase`; returns `Ok(false)` when it is already present.
    pub fn insert(&mut self, phrase: &str, provenance: Provenance) -> Result<bool, OntologyError> {
        let tokens = tokenize(phrase);
        if tokens.is_empty() || tokens.len() > MAX_PHRASE_TOKENS {
            return Err(OntologyError::BadEntry {
                line: 0,
                entry: phrase.to_string(),
                tokens: tokens.len(),
            });
        }
        let entry = tokens.join(" ");
        if self.contains(&entry) {
            return Ok(false);
        }
        self.entries.push(LexiconEntry {
            phrase: entry,
            tokens,
            provenance,
        });
        Ok(true)
    }

    pub fn contains(&self, phrase: &str) -> bool {
        self.entries.iter().any(|e| e.phrase == phrase)
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Serialize back to the file format. Seed entries omit the provenance
    /// column.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.phrase);
            if e.provenance != Provenance::Seed {
                out.push('\t');
                out.push_str(&e.provenance.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// One occurrence of a lexicon entry in a review's token stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermMatch {
    pub review_id: String,
    pub entry: String,
    pub token_offset: usize,
}

/// Entries grouped by first token for matching.
struct PhraseIndex<'a> {
    by_first: HashMap<&'a str, Vec<&'a LexiconEntry>>,
}

impl<'a> PhraseIndex<'a> {
    fn new(lexicon: &'a Lexicon) -> Self {
        let mut by_first: HashMap<&str, Vec<&LexiconEntry>> = HashMap::new();
        for e in &lexicon.entries {
            by_first.entry(e.tokens[0].as_str()).or_default().push(e);
        }
        PhraseIndex { by_first }
    }

    fn scan(&self, review_id: &str, tokens: &[String]) -> Vec<TermMatch> {
        let mut out = Vec::new();
        for (offset, tok) in tokens.iter().enumerate() {
            let Some(candidates) = self.by_first.get(tok.as_str()) else {
                continue;
            };
            for e in candidates {
                let end = offset + e.tokens.len();
                if end <= tokens.len() && tokens[offset..end] == e.tokens[..] {
                    out.push(TermMatch {
                        review_id: review_id.to_string(),
                        entry: e.phrase.clone(),
                        token_offset: offset,
                    });
                }
            }
        }
        out
    }
}

/// Occurrences of lexicon entries as contiguous whole-token runs. Ordered by
/// offset, then lexicon order.
pub fn match_tokens(review_id: &str, tokens: &[String], lexicon: &Lexicon) -> Vec<TermMatch> {
    PhraseIndex::new(lexicon).scan(review_id, tokens)
}

pub fn match_terms(review: &Review, lexicon: &Lexicon) -> Vec<TermMatch> {
    match_tokens(&review.review_id, &tokenize(&review.text), lexicon)
}

/// A review that mentions at least one lexicon entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlaggedReview {
    pub review_id: String,
    pub poi_id: String,
    pub matches: Vec<TermMatch>,
}

impl FlaggedReview {
    /// Distinct matched entries in first-seen order.
    pub fn matched_entries(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.matches
            .iter()
            .filter(|m| seen.insert(m.entry.as_str()))
            .map(|m| m.entry.as_str())
            .collect()
    }
}

/// Keep the reviews with at least one match, in input order.
pub fn filter_reviews(reviews: &[Review], lexicon: &Lexicon) -> Vec<FlaggedReview> {
    let index = PhraseIndex::new(lexicon);
    reviews
        .par_iter()
        .filter_map(|r| {
            let matches = index.scan(&r.review_id, &tokenize(&r.text));
            (!matches.is_empty()).then(|| FlaggedReview {
                review_id: r.review_id.clone(),
                poi_id: r.poi_id.clone(),
                matches,
            })
        })
        .collect()
}

/// Stopword set used by rankings and LSVA.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Stoplist(BTreeSet<String>);

impl Stoplist {
    /// The bundled 179-word English list.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_STOPWORDS)
    }

    pub fn parse(text: &str) -> Self {
        Stoplist(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Stoplist(words.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn rank_counts(counts: BTreeMap<String, usize>, top_k: usize) -> Vec<(String, usize)> {
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    // BTreeMap order is lexicographic and the sort is stable
    ranked.sort_by_key(|r| std::cmp::Reverse(r.1));
    ranked.truncate(top_k);
    ranked
}

/// Most frequent non-stopword tokens across all documents, by total
/// occurrences. Ties are broken lexicographically.
pub fn term_frequency_ranking(
    docs: &[Vec<String>],
    top_k: usize,
    stoplist: &Stoplist,
) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for doc in docs {
        for t in doc {
            if !stoplist.contains(t) {
                *counts.entry(t.clone()).or_insert(0) += 1;
            }
        }
    }
    rank_counts(counts, top_k.max(1))
}

/// A phrase offered to the curator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub rank: usize,
    pub phrase: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CurationAction {
    Accept,
    Reject,
    /// Add a free-form phrase, then ask about the same candidate again.
    Add(String),
    Stop,
}

/// Decision source for [`curate_session`]; the CLI implements it on a
/// terminal, tests script it.
pub trait CurationOperator {
    fn show_page(&mut self, _page: usize, _candidates: &[Candidate]) {}
    fn decide(&mut self, candidate: &Candidate) -> CurationAction;
}

#[derive(Debug, Clone)]
pub struct CurationOutcome {
    pub lexicon: Lexicon,
    pub accepted: Vec<String>,
    pub transcript: Vec<String>,
}

/// Ranked unigram and bigram candidates not already in the lexicon. Bigrams
/// are only formed from two non-stopwords.
pub fn curation_candidates(
    docs: &[Vec<String>],
    lexicon: &Lexicon,
    stoplist: &Stoplist,
    limit: usize,
) -> Vec<Candidate> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for doc in docs {
        for (i, t) in doc.iter().enumerate() {
            if stoplist.contains(t) {
                continue;
            }
            *counts.entry(t.clone()).or_insert(0) += 1;
            if let Some(next) = doc.get(i + 1).filter(|n| !stoplist.contains(n)) {
                *counts.entry(format!("{t} {next}")).or_insert(0) += 1;
            }
        }
    }
    counts.retain(|phrase, _| !lexicon.contains(phrase));
    rank_counts(counts, limit)
        .into_iter()
        .enumerate()
        .map(|(i, (phrase, count))| Candidate {
            rank: i + 1,
            phrase,
            count,
        })
        .collect()
}

/// Page through ranked candidates and let the operator grow the lexicon.
/// Accepted phrases are appended with [`Provenance::BottomUp`].
pub fn curate_session<O: CurationOperator>(
    docs: &[Vec<String>],
    lexicon: &Lexicon,
    stoplist: &Stoplist,
    page_size: usize,
    limit: usize,
    operator: &mut O,
) -> CurationOutcome {
    let mut revised = lexicon.clone();
    let mut accepted = Vec::new();
    let mut transcript = Vec::new();
    let candidates = curation_candidates(docs, lexicon, stoplist, limit);
    'pages: for (page, chunk) in candidates.chunks(page_size.max(1)).enumerate() {
        operator.show_page(page + 1, chunk);
        transcript.push(format!("page {}", page + 1));
        for cand in chunk {
            if revised.contains(&cand.phrase) {
                continue;
            }
            loop {
                match operator.decide(cand) {
                    CurationAction::Accept => {
                        if revised
                            .insert(&cand.phrase, Provenance::BottomUp)
                            .unwrap_or(false)
                        {
                            accepted.push(cand.phrase.clone());
                        }
                        transcript.push(format!("accept\t{}\t{}", cand.phrase, cand.count));
                        break;
                    }
                    CurationAction::Reject => {
                        transcript.push(format!("reject\t{}\t{}", cand.phrase, cand.count));
                        break;
                    }
                    CurationAction::Add(phrase) => {
                        match revised.insert(&phrase, Provenance::BottomUp) {
                            Ok(true) => {
                                let normalized = tokenize(&phrase).join(" ");
                                transcript.push(format!("add\t{normalized}"));
                                accepted.push(normalized);
                            }
                            Ok(false) => transcript.push(format!("add-duplicate\t{phrase}")),
                            Err(e) => transcript.push(format!("add-invalid\t{phrase}\t{e}")),
                        }
                    }
                    CurationAction::Stop => {
                        transcript.push("stop".to_string());
                        break 'pages;
                    }
                }
            }
        }
    }
    CurationOutcome {
        lexicon: revised,
        accepted,
        transcript,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn review(id: &str, text: &str) -> Review {
        Review {
            review_id: id.into(),
            poi_id: "p".into(),
            author: "a".into(),
            rating: 5,
            likes: 0,
            text: text.into(),
        }
    }

    fn lex(lines: &str) -> Lexicon {
        Lexicon::parse(lines).unwrap().0
    }

    #[test]
    fn bundled_lexicon_has_44_entries() {
        let l = Lexicon::bundled();
        assert_eq!(l.len(), 44);
        assert!(l.contains("close to"));
        assert!(l.contains("walkability"));
        assert!(l.contains("right next to"));
        assert!(l.entries().iter().all(|e| e.provenance == Provenance::Seed));
    }

    #[test]
    fn case_fold_dedup_warns() {
        let (l, w) = Lexicon::parse("Parking\nparking\n").unwrap();
        assert_eq!(l.len(), 1);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn empty_file_is_error() {
        assert!(matches!(Lexicon::parse(""), Err(OntologyError::Empty)));
        assert!(matches!(
            Lexicon::parse("# only a comment\n"),
            Err(OntologyError::Empty)
        ));
    }

    #[test]
    fn long_phrase_rejected() {
        assert!(matches!(
            Lexicon::parse("one two three four five"),
            Err(OntologyError::BadEntry { tokens: 5, .. })
        ));
    }

    #[test]
    fn provenance_round_trip() {
        let (l, _) = Lexicon::parse("parking\nparking lot\tbottom_up\n").unwrap();
        assert_eq!(l.entries()[1].provenance, Provenance::BottomUp);
        assert_eq!(Lexicon::parse(&l.to_file_string()).unwrap().0, l);
        assert!(matches!(
            Lexicon::parse("x\tnonsense"),
            Err(OntologyError::BadProvenance { .. })
        ));
    }

    #[test]
    fn matches_whole_tokens() {
        let l = Lexicon::bundled();
        let m = match_terms(&review("r", "Parking was easy"), &l);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].entry, "parking");
        assert_eq!(m[0].token_offset, 0);

        let near = lex("near");
        assert!(match_terms(&review("r", "We were nearly late"), &near).is_empty());

        let close = lex("close to");
        let m = match_terms(&review("r", "It is close to downtown"), &close);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].token_offset, 2);
    }

    #[test]
    fn filter_keeps_matching_reviews() {
        let reviews = vec![
            review("a", "Terrible traffic on Sunday"),
            review("b", "Lovely staff"),
        ];
        let out = filter_reviews(&reviews, &Lexicon::bundled());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].review_id, "a");
        assert!(filter_reviews(&reviews, &Lexicon::default()).is_empty());
    }

    /// Independent scanner: pad with spaces and look for " phrase " in the
    /// space-joined token stream.
    fn naive_matches(text: &str, lexicon: &Lexicon) -> bool {
        let joined = format!(" {} ", tokenize(text).join(" "));
        lexicon
            .entries()
            .iter()
            .any(|e| joined.contains(&format!(" {} ", e.phrase)))
    }

    #[test]
    fn filter_agrees_with_naive_scanner() {
        let texts = [
            "The parking lot was packed.",
            "Nearly empty, no crowd.",
            "Right next to the station!",
            "right next door",
            "Close to everything; walkable area",
            "closeto downtown",
            "TRAFFIC!!!",
            "I love the outdoors",
            "Easy to find, hard to leave",
            "travel-time was fine",
        ];
        let reviews: Vec<Review> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| review(&format!("r{i}"), t))
            .collect();
        let l = Lexicon::bundled();
        let got: Vec<String> = filter_reviews(&reviews, &l)
            .into_iter()
            .map(|f| f.review_id)
            .collect();
        let want: Vec<String> = reviews
            .iter()
            .filter(|r| naive_matches(&r.text, &l))
            .map(|r| r.review_id.clone())
            .collect();
        assert_eq!(got, want);
        assert_eq!(want.len(), 6);
    }

    #[test]
    fn ranking_respects_stoplist() {
        let docs = vec![tokenize("a b b")];
        let stop = Stoplist::from_words(["a"]);
        assert_eq!(
            term_frequency_ranking(&docs, 10, &stop),
            vec![("b".to_string(), 2)]
        );
        let docs = vec![tokenize("x y y z z")];
        let top = term_frequency_ranking(&docs, 1, &Stoplist::default());
        assert_eq!(top, vec![("y".to_string(), 2)]);
    }

    #[test]
    fn ranking_matches_hash_counter() {
        let words = ["park", "lot", "street", "bus", "the", "car", "walk"];
        let mut docs = Vec::new();
        let mut state = 7u64;
        for _ in 0..100 {
            let mut doc = Vec::new();
            for _ in 0..12 {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                doc.push(words[(state >> 33) as usize % words.len()].to_string());
            }
            docs.push(doc);
        }
        let stop = Stoplist::bundled();
        let mut oracle: HashMap<String, usize> = HashMap::new();
        for d in &docs {
            for t in d {
                if t != "the" {
                    *oracle.entry(t.clone()).or_default() += 1;
                }
            }
        }
        let mut expected: Vec<(String, usize)> = oracle.into_iter().collect();
        expected.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        assert_eq!(term_frequency_ranking(&docs, 100, &stop), expected);
    }

    struct Scripted(Vec<CurationAction>);

    impl CurationOperator for Scripted {
        fn decide(&mut self, _c: &Candidate) -> CurationAction {
            if self.0.is_empty() {
                CurationAction::Stop
            } else {
                self.0.remove(0)
            }
        }
    }

    fn curation_docs() -> Vec<Vec<String>> {
        [
            "the parking lot was full",
            "parking lot again",
            "nice food",
            "great food",
        ]
        .iter()
        .map(|t| tokenize(t))
        .collect()
    }

    #[test]
    fn curation_accepts_phrase() {
        let docs = curation_docs();
        let base = lex("parking");
        let cands = curation_candidates(&docs, &base, &Stoplist::bundled(), 100);
        assert_eq!(cands[0].phrase, "food");
        assert_eq!(cands[1].phrase, "lot");
        assert_eq!(cands[2].phrase, "parking lot");
        let mut op = Scripted(vec![
            CurationAction::Reject,
            CurationAction::Reject,
            CurationAction::Accept,
            CurationAction::Stop,
        ]);
        let out = curate_session(&docs, &base, &Stoplist::bundled(), 2, 100, &mut op);
        assert_eq!(out.lexicon.len(), 2);
        assert_eq!(out.accepted, vec!["parking lot"]);
        assert_eq!(out.lexicon.entries()[1].provenance, Provenance::BottomUp);
        assert!(out.transcript.contains(&"stop".to_string()));
    }

    #[test]
    fn curation_reject_all_unchanged() {
        let docs = curation_docs();
        let base = lex("parking");
        let mut op = Scripted(vec![CurationAction::Reject; 50]);
        let out = curate_session(&docs, &base, &Stoplist::bundled(), 3, 100, &mut op);
        assert_eq!(out.lexicon, base);
        assert!(out.accepted.is_empty());
    }

    #[test]
    fn curation_then_refilter_is_superset() {
        let reviews: Vec<Review> = ["the parking lot", "great food", "food court"]
            .iter()
            .enumerate()
            .map(|(i, t)| review(&format!("r{i}"), t))
            .collect();
        let docs: Vec<Vec<String>> = reviews.iter().map(|r| tokenize(&r.text)).collect();
        let base = lex("parking");
        let before = filter_reviews(&reviews, &base);
        let mut op = Scripted(vec![CurationAction::Accept]);
        let out = curate_session(&docs, &base, &Stoplist::bundled(), 5, 100, &mut op);
        let after = filter_reviews(&reviews, &out.lexicon);
        assert!(after.len() > before.len());
        for f in &before {
            assert!(after.iter().any(|g| g.review_id == f.review_id));
        }
    }

    #[test]
    fn curation_add_free_phrase() {
        let docs = curation_docs();
        let mut op = Scripted(vec![
            CurationAction::Add("Bus Stop".into()),
            CurationAction::Reject,
        ]);
        let out = curate_session(&docs, &lex("parking"), &Stoplist::bundled(), 1, 1, &mut op);
        assert_eq!(out.accepted, vec!["bus stop"]);
        assert!(out.lexicon.contains("bus stop"));
    }

    proptest! {
        #[test]
        fn adding_entry_never_shrinks_filter(
            texts in proptest::collection::vec("[a-f ]{0,30}", 1..10),
            extra in "[a-f]{1,3}",
        ) {
            let reviews: Vec<Review> = texts.iter().enumerate()
                .map(|(i, t)| review(&format!("r{i}"), t)).collect();
            let base = lex("ab\ncd e");
            let mut grown = base.clone();
            grown.insert(&extra, Provenance::BottomUp).unwrap();
            let a = filter_reviews(&reviews, &base);
            let b = filter_reviews(&reviews, &grown);
            prop_assert!(b.len() >= a.len());
            for f in &a {
                prop_assert!(b.iter().any(|g| g.review_id == f.review_id));
            }
        }

        #[test]
        fn matches_never_inside_tokens(text in "[a-z ]{0,40}") {
            let l = lex("near");
            let toks = tokenize(&text);
            for m in match_tokens("r", &toks, &l) {
                prop_assert_eq!(&toks[m.token_offset], "near");
            }
        }
    }
}
