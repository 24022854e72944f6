use proptest::prelude::*;

use tcplab::domain::{RankedSequence, Subject};
use tcplab::features::{build_features, FeatureFamily, FeatureSchema};
use tcplab::ingest::{generate_synthetic, read_subject, split_train_test, write_subject, DatasetSchema, SynthConfig};

fn subject(seed: u64, n_cycles: usize) -> Subject {
    generate_synthetic(&SynthConfig {
        n_cycles,
        tests_per_cycle: 8,
        failure_rate_target: 0.2,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

proptest! {
    #[test]
    fn from_scores_is_a_descending_permutation(scores in proptest::collection::vec(-1e3f64..1e3, 0..40)) {
        let s = RankedSequence::from_scores(scores.clone());
        prop_assert!(s.is_permutation_of(scores.len()));
        for w in s.order.windows(2) {
            prop_assert!(scores[w[0]] >= scores[w[1]]);
        }
        let ranks = s.ranks();
        for (pos, &i) in s.order.iter().enumerate() {
            prop_assert_eq!(ranks[i], pos + 1);
        }
    }

    #[test]
    fn split_is_the_shortest_sufficient_prefix(seed in 0u64..50, target in 1usize..200) {
        let s = subject(seed, 40);
        let split = split_train_test(&s, target).unwrap();
        let train = split.train_cycles(&s);
        let records: usize = train.iter().map(|c| c.len()).sum();
        prop_assert!(records >= target);
        prop_assert!(records - train.last().unwrap().len() < target);
        prop_assert!(!split.test_cycles(&s).is_empty());
    }

    /// Features of the first `cut` cycles are the same whether or not later
    /// cycles exist, so no cycle sees its own or future verdicts.
    #[test]
    fn features_never_look_ahead(seed in 0u64..20, cut in 1usize..30) {
        let s = subject(seed, 30);
        for family in [FeatureFamily::BertolinoRl, FeatureFamily::Deeporder] {
            let schema = FeatureSchema::for_family(family);
            let full = build_features(&s, &schema).unwrap();
            let mut prefix = s.clone();
            prefix.cycles.truncate(cut);
            let part = build_features(&prefix, &schema).unwrap();
            prop_assert_eq!(&part.cycles[..], &full.cycles[..cut]);
        }
    }

    /// Flipping a cycle's verdicts changes no feature of that cycle.
    #[test]
    fn own_verdicts_do_not_leak(seed in 0u64..20, at in 0usize..30) {
        let s = subject(seed, 30);
        let mut flipped = s.clone();
        for r in &mut flipped.cycles[at].records {
            r.verdict = if r.verdict.is_fail() { tcplab::Verdict::Pass } else { tcplab::Verdict::Fail };
        }
        let schema = FeatureSchema::default();
        let a = build_features(&s, &schema).unwrap();
        let b = build_features(&flipped, &schema).unwrap();
        prop_assert_eq!(&a.cycles[..=at], &b.cycles[..=at]);
    }

    /// Reordering records inside a cycle permutes its feature rows the same way.
    #[test]
    fn features_are_equivariant_to_record_order(seed in 0u64..20, at in 0usize..20, rot in 1usize..8) {
        let s = subject(seed, 20);
        let schema = FeatureSchema::default();
        let base = build_features(&s, &schema).unwrap();
        let mut moved = s.clone();
        moved.cycles[at].records.rotate_left(rot);
        let order: Vec<usize> = (0..8).map(|i| (i + rot) % 8).collect();
        let f = build_features(&moved, &schema).unwrap();
        prop_assert_eq!(&f.cycles[at], &base.cycles[at].permuted(&order));
    }
}

#[test]
fn csv_round_trip_preserves_subject() {
    let s = subject(3, 25);
    let mut buf = Vec::new();
    write_subject(&s, &mut buf).unwrap();
    let schema = DatasetSchema {
        extra_columns: s.feature_columns.clone(),
    };
    let back = read_subject(buf.as_slice(), &s.name, &schema).unwrap();
    assert_eq!(back, s);
}

#[test]
fn synthetic_subjects_are_valid() {
    for seed in 0..5 {
        assert!(subject(seed, 50).validate().is_empty());
    }
}
