use densitylens::ingest::Review;
use densitylens::ontology::{filter_reviews, Lexicon};
use densitylens::textprep::{build_doc_term_matrix, segment_sentences, tfidf_transform, tokenize};

fn docs() -> Vec<(String, String)> {
    [
        ("d1", "parking parking traffic"),
        ("d2", "traffic walkable"),
        ("d3", "parking walkable walkable transit"),
    ]
    .iter()
    .map(|(id, text)| (id.to_string(), text.to_string()))
    .collect()
}

#[test]
fn tfidf_matches_hand_computation() {
    let m = build_doc_term_matrix(&docs()).unwrap();
    assert_eq!(m.vocabulary, ["parking", "traffic", "transit", "walkable"]);
    let t = tfidf_transform(&m);

    let idf = |df: f64| (4.0 / (1.0 + df)).ln() + 1.0;
    let raw = [
        vec![2.0 * idf(2.0), idf(2.0), 0.0, 0.0],
        vec![0.0, idf(2.0), 0.0, idf(2.0)],
        vec![idf(2.0), 0.0, idf(1.0), 2.0 * idf(2.0)],
    ];
    for (d, row) in raw.iter().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (got, want) in t.dense_row(d).iter().zip(row) {
            assert!(
                (got - want / norm).abs() < 1e-12,
                "doc {d}: {got} vs {}",
                want / norm
            );
        }
    }
}

#[test]
fn tokens_are_lowercase_words() {
    assert_eq!(
        tokenize("Parking was HARD, didn't find a spot!"),
        ["parking", "was", "hard", "didn't", "find", "a", "spot"]
    );
}

#[test]
fn sentences_split_on_terminal_punctuation() {
    let s = segment_sentences("Great food. Parking was awful!! Would I return? Yes");
    assert_eq!(
        s,
        [
            "Great food.",
            "Parking was awful!!",
            "Would I return?",
            "Yes"
        ]
    );
}

#[test]
fn bundled_lexicon_flags_density_reviews() {
    let review = |id: &str, text: &str| Review {
        review_id: id.into(),
        poi_id: "p".into(),
        author: "a".into(),
        rating: 4,
        likes: 0,
        text: text.into(),
    };
    let reviews = [
        review("r1", "The parking lot was always full."),
        review("r2", "Lovely pasta and friendly staff."),
    ];
    let flagged = filter_reviews(&reviews, &Lexicon::bundled());
    assert_eq!(flagged.len(), 1);
    assert_eq!(flagged[0].review_id, "r1");
}
