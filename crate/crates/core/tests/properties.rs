use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use wikitox::analytics::{naf_values, ScoredComment, Scorer};
use wikitox::corpus::{diff_added_text_with, DiffOptions, TokenUnit};
use wikitox::eval::{classification_metrics, equal_error_threshold, spearman};
use wikitox::features::build_vocab;
use wikitox::labels::krippendorff_alpha;
use wikitox::model::{train, TrainingExample};
use wikitox::seed;
use wikitox::synth::{generate, SynthConfig};
use wikitox::{AnnotationRecord, FeatureSpec, Hyperparameters, LabelType, ModelKind};

fn char_opts() -> DiffOptions {
    DiffOptions {
        unit: TokenUnit::Char,
        min_match: 2,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn added_segments_are_disjoint_pieces_of_next(prev in "[abc ]{0,40}", next in "[abc ]{0,40}") {
        let segs = diff_added_text_with(&prev, &next, &char_opts());
        let total: usize = segs.iter().map(|s| s.chars().count()).sum();
        prop_assert!(total <= next.chars().count());
        // Segments appear in order.
        let mut rest = next.as_str();
        for s in &segs {
            prop_assert!(!s.is_empty());
            let at = rest.find(s.as_str());
            prop_assert!(at.is_some(), "{s:?} not in {rest:?}");
            rest = &rest[at.unwrap() + s.len()..];
        }
    }

    #[test]
    fn unchanged_text_adds_nothing(text in "[a-d \n]{0,60}") {
        prop_assert!(diff_added_text_with(&text, &text, &char_opts()).is_empty());
        prop_assert!(diff_added_text_with(&text, &text, &DiffOptions::default()).is_empty());
    }

    #[test]
    fn appended_text_is_recovered(prev in "[abc]{2,40}", tail in "[xyz]{1,20}") {
        let next = format!("{prev}{tail}");
        prop_assert_eq!(diff_added_text_with(&prev, &next, &char_opts()), vec![tail]);
    }

    #[test]
    fn alpha_is_at_most_one_and_order_free(
        votes in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 2..6), 2..12),
        seed in any::<u64>(),
    ) {
        let mut records: Vec<AnnotationRecord> = votes
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| {
                vs.iter().enumerate().map(move |(w, &v)| AnnotationRecord {
                    comment_id: format!("c{u}"),
                    worker_id: format!("w{w}"),
                    is_attack: v,
                    not_english: false,
                })
            })
            .collect();
        let a = krippendorff_alpha(&records);
        records.shuffle(&mut seed::rng(seed));
        let b = krippendorff_alpha(&records);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert!(a <= 1.0);
                prop_assert!((a - b).abs() < 1e-12);
            }
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn spearman_is_symmetric_and_bounded(
        pairs in proptest::collection::vec((0u8..6, 0u8..6), 3..40),
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
        let b: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
        if let (Ok(x), Ok(y)) = (spearman(&a, &b), spearman(&b, &a)) {
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&x));
        }
    }

    #[test]
    fn threshold_metrics_partition_the_set(
        pairs in proptest::collection::vec((0u16..100, any::<bool>()), 2..80),
    ) {
        let scores: Vec<f64> = pairs.iter().map(|p| f64::from(p.0) / 100.0).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        if let Ok(r) = equal_error_threshold(&scores, &labels) {
            let m = r.metrics;
            prop_assert_eq!(m.tp + m.fp + m.fn_ + m.tn, scores.len() as u64);
            prop_assert_eq!(m, classification_metrics(&scores, &labels, r.t));
            prop_assert!((0.0..=1.0).contains(&r.t));
        }
    }
}

#[test]
fn naf_values_lie_in_unit_interval_and_skip_lone_comments() {
    let corpus = generate(&SynthConfig::fixture());
    let scored: Vec<ScoredComment> = corpus
        .comments
        .iter()
        .map(|c| {
            let attack = corpus.truth.get(&c.comment_id).copied().unwrap_or(false);
            ScoredComment::new(c.clone(), if attack { 0.9 } else { 0.1 }, 0.5)
        })
        .collect();
    for n in [1, 3, 5] {
        let values = naf_values(&scored, n);
        assert!(!values.is_empty());
        assert!(values.iter().all(|v| (0.0..=1.0).contains(&v.naf) && v.neighbours >= 1 && v.neighbours <= 2 * n));
    }
}

#[test]
fn parallel_and_sequential_scoring_agree() {
    let corpus = generate(&SynthConfig {
        seed: 5,
        n_comments: 600,
        attack_prevalence: 0.1,
        n_pages: 20,
        n_users: 50,
        ..SynthConfig::default()
    });
    let texts: Vec<&str> = corpus.comments.iter().map(|c| c.clean_text.as_str()).collect();
    let vocab = build_vocab(&texts, &FeatureSpec::char()).unwrap();
    let examples: Vec<TrainingExample> = corpus
        .comments
        .iter()
        .map(|c| TrainingExample {
            x: vocab.vectorize(&c.clean_text),
            y: if corpus.truth[&c.comment_id] { [0.0, 1.0] } else { [1.0, 0.0] },
        })
        .collect();
    let hp = Hyperparameters {
        epochs: 2,
        ..Hyperparameters::default()
    };
    let model = train(&examples, ModelKind::LogisticRegression, LabelType::OneHot, &hp, 9)
        .unwrap()
        .with_vocabulary(&vocab);
    let scorer = Scorer::new(&model, &vocab, 0.5).unwrap();
    let a = scorer.score_all(corpus.comments.clone(), true);
    let b = scorer.score_all(corpus.comments.clone(), false);
    assert_eq!(a, b);
    let mut rng = seed::rng(1);
    for _ in 0..20 {
        let s = &a[rng.gen_range(0..a.len())];
        assert!((0.0..=1.0).contains(&s.attack_score));
        assert_eq!(s.is_attack, s.attack_score > 0.5);
    }
}
