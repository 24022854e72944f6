use proptest::prelude::*;

use tcplab::domain::{optimal_sequence, Cycle, RankedSequence, TestRecord, Verdict};
use tcplab::metrics::{
    apfd, apfd_bounds, cycle_metrics, friedman_iman_davenport, nrpa, ntr, rank_rows, rapfd, rapfd_from_failing_ranks,
};

/// A cycle with `k` tests, failures at the flagged positions, and a
/// permutation of it.
fn cycle_and_order() -> impl Strategy<Value = (Cycle, Vec<usize>)> {
    (2usize..25)
        .prop_flat_map(|k| {
            (
                proptest::collection::vec(any::<bool>(), k),
                proptest::collection::vec(0.1f64..50.0, k),
                Just((0..k).collect::<Vec<usize>>()).prop_shuffle(),
            )
        })
        .prop_filter("needs a failure", |(f, _, _)| f.iter().any(|&x| x))
        .prop_map(|(fails, durs, order)| {
            let records = fails
                .iter()
                .zip(&durs)
                .enumerate()
                .map(|(i, (&f, &d))| TestRecord::new(format!("t{i}"), d, if f { Verdict::Fail } else { Verdict::Pass }))
                .collect();
            (Cycle::new(1, 0, records), order)
        })
}

proptest! {
    #[test]
    fn apfd_within_bounds_and_rapfd_in_unit((c, order) in cycle_and_order()) {
        let s = RankedSequence::from_order(order);
        let (lo, hi) = apfd_bounds(&c).unwrap();
        let a = apfd(&s, &c).unwrap();
        prop_assert!(a >= lo - 1e-12 && a <= hi + 1e-12);
        let r = rapfd(&s, &c).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        if c.fail_count() < c.len() {
            // Affine relation between APFD and rAPFD.
            prop_assert!(((a - lo) / (hi - lo) - r).abs() < 1e-9);
        }
    }

    #[test]
    fn optimal_order_is_perfect((c, _) in cycle_and_order()) {
        let opt = optimal_sequence(&c);
        prop_assert_eq!(rapfd(&opt, &c).unwrap(), 1.0);
        prop_assert_eq!(nrpa(&opt, &c).unwrap(), 1.0);
    }

    #[test]
    fn nrpa_in_unit_interval((c, order) in cycle_and_order()) {
        let v = nrpa(&RankedSequence::from_order(order), &c).unwrap();
        prop_assert!(v > 0.0 && v <= 1.0 + 1e-12);
    }

    #[test]
    fn rank_sum_form_matches_sequence_form((c, order) in cycle_and_order()) {
        let s = RankedSequence::from_order(order);
        let ranks = s.ranks();
        let failing = (0..c.len()).filter(|&i| c.records[i].verdict.is_fail()).map(|i| ranks[i]);
        prop_assert_eq!(rapfd_from_failing_ranks(failing, c.len()), Some(rapfd(&s, &c).unwrap()));
    }

    #[test]
    fn swapping_a_pass_ahead_of_a_fail_never_helps((c, order) in cycle_and_order()) {
        let s = RankedSequence::from_order(order.clone());
        let base = rapfd(&s, &c).unwrap();
        for p in 0..order.len() - 1 {
            let (a, b) = (order[p], order[p + 1]);
            if c.records[a].verdict.is_fail() && !c.records[b].verdict.is_fail() {
                let mut worse = order.clone();
                worse.swap(p, p + 1);
                prop_assert!(rapfd(&RankedSequence::from_order(worse), &c).unwrap() < base);
            }
        }
    }

    #[test]
    fn ntr_in_unit_interval((c, order) in cycle_and_order()) {
        let m = cycle_metrics(&RankedSequence::from_order(order), &c).unwrap();
        let v = ntr(&[(m.first_fail_time.unwrap(), m.total_time)]).unwrap();
        prop_assert!(v > -1e-12 && v < 1.0, "ntr {v}");
    }

    #[test]
    fn friedman_ranks_sum_per_row(rows in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 4), 2..20)) {
        for r in rank_rows(&rows) {
            prop_assert!((r.iter().sum::<f64>() - 10.0).abs() < 1e-9);
        }
        let res = friedman_iman_davenport(&rows).unwrap();
        prop_assert!(res.chi2_f >= 0.0);
        prop_assert!((res.mean_ranks.iter().sum::<f64>() - 10.0).abs() < 1e-9);
    }
}

#[test]
fn passing_cycle_has_no_apfd() {
    let c = Cycle::new(1, 0, vec![TestRecord::new("a", 1.0, Verdict::Pass), TestRecord::new("b", 1.0, Verdict::Pass)]);
    let m = cycle_metrics(&RankedSequence::from_order(vec![1, 0]), &c).unwrap();
    assert_eq!((m.apfd, m.rapfd, m.first_fail_time), (None, None, None));
    assert!(apfd(&RankedSequence::from_order(vec![0, 1]), &c).is_err());
}
