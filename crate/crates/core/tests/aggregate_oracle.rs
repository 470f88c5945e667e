use std::collections::BTreeMap;

use densitylens::aggregate::{cbg_sentiment, poi_sentiment, ScoredReview};
use densitylens::ingest::PointOfInterest;
use densitylens::sentiment::{label_from_triple, SentimentClass, SentimentTriple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn poi(id: &str, cbg: &str) -> PointOfInterest {
    PointOfInterest {
        poi_id: id.into(),
        name: id.into(),
        latitude: 0.0,
        longitude: 0.0,
        naics_code: "722511".into(),
        cbg_id: Some(cbg.into()),
    }
}

fn reviews_for(poi_id: &str, values: &[f64]) -> Vec<ScoredReview> {
    values
        .iter()
        .enumerate()
        .map(|(i, &sentiment)| ScoredReview {
            review_id: format!("{poi_id}-{i}"),
            poi_id: poi_id.into(),
            sentiment,
        })
        .collect()
}

#[test]
fn cbg_weighted_mean_equals_flat_review_mean() {
    for city in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(city);
        let mut pois = Vec::new();
        let mut reviews = Vec::new();
        for p in 0..rng.gen_range(5..25) {
            let id = format!("p{p}");
            let cbg = format!("c{}", rng.gen_range(0..4));
            let values: Vec<f64> = (0..rng.gen_range(10..40))
                .map(|_| rng.gen_range(-1.0..=1.0))
                .collect();
            reviews.extend(reviews_for(&id, &values));
            pois.push(poi(&id, &cbg));
        }
        let cbg_of: BTreeMap<&str, &str> = pois
            .iter()
            .map(|p| (p.poi_id.as_str(), p.cbg_id.as_deref().unwrap()))
            .collect();
        let mut flat: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for r in &reviews {
            flat.entry(cbg_of[r.poi_id.as_str()])
                .or_default()
                .push(r.sentiment);
        }

        flat.retain(|_, values| values.len() > 10);
        let rollup = cbg_sentiment(&poi_sentiment(&reviews, &pois, 10).retained, 10);
        assert_eq!(rollup.retained.len(), flat.len());
        for c in &rollup.retained {
            let values = &flat[c.cbg_id.as_str()];
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            assert!(
                (c.weighted_mean - mean).abs() < 1e-12,
                "city {city} {}",
                c.cbg_id
            );
            assert_eq!(c.total_reviews, values.len());
        }
    }
}

#[test]
fn review_thresholds_at_the_boundary() {
    let pois = [poi("nine", "c1"), poi("ten", "c2")];
    let mut reviews = reviews_for("nine", &[0.5; 9]);
    reviews.extend(reviews_for("ten", &[0.5; 10]));
    let rollup = poi_sentiment(&reviews, &pois, 10);
    assert_eq!(rollup.dropped_below_threshold, 1);
    assert_eq!(rollup.retained.len(), 1);
    assert_eq!(rollup.retained[0].poi_id, "ten");

    let pois = [poi("a", "ten"), poi("b", "eleven")];
    let mut reviews = reviews_for("a", &[0.1; 10]);
    reviews.extend(reviews_for("b", &[0.1; 11]));
    let cbgs = cbg_sentiment(&poi_sentiment(&reviews, &pois, 10).retained, 10);
    assert_eq!(cbgs.dropped_below_threshold, 1);
    assert_eq!(cbgs.retained.len(), 1);
    assert_eq!(cbgs.retained[0].cbg_id, "eleven");
}

#[test]
fn reference_triples_take_the_most_probable_label() {
    let cases = [
        ((0.8505, 0.1366, 0.0129), SentimentClass::Negative),
        ((0.0705, 0.7212, 0.2083), SentimentClass::Neutral),
        ((0.0090, 0.3064, 0.6846), SentimentClass::Positive),
    ];
    for ((n, u, p), want) in cases {
        let t = SentimentTriple::new(n, u, p).unwrap();
        assert_eq!(label_from_triple(&t).unwrap(), want);
    }
}

#[test]
fn labels_survive_renormalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let raw: [f64; 3] = [
            rng.gen_range(0.01..1.0),
            rng.gen_range(0.01..1.0),
            rng.gen_range(0.01..1.0),
        ];
        let scale: f64 = rng.gen_range(0.1..10.0);
        let norm = |v: [f64; 3]| {
            let s: f64 = v.iter().sum();
            SentimentTriple::new(v[0] / s, v[1] / s, v[2] / s).unwrap()
        };
        let a = label_from_triple(&norm(raw)).unwrap();
        let b = label_from_triple(&norm(raw.map(|v| v * scale))).unwrap();
        assert_eq!(a, b);
        let max = raw.iter().cloned().fold(f64::MIN, f64::max);
        let want = if raw[1] == max {
            SentimentClass::Neutral
        } else if raw[0] == max {
            SentimentClass::Negative
        } else {
            SentimentClass::Positive
        };
        assert_eq!(a, want);
    }
}
