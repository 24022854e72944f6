//! Evaluation metrics for prioritized sequences.
//!
//! APFD and its per-cycle bounds, the rectified (min-max normalized) APFD,
//! rank percentile average against the optimal order, and normalized time
//! reduction. Ranks are 1-based throughout.

mod friedman;

pub use friedman::{
    friedman_from_ranks, friedman_iman_davenport, holm_adjust, mean_rank_table, rank_rows,
    sign_test_p_value, FriedmanResult, MeanRankTable, PairwiseComparison, RankEntry,
};

use serde::{Deserialize, Serialize};

use crate::domain::{optimal_sequence, Cycle, RankedSequence};
use crate::error::{Error, Result};

/// Per-cycle evaluation of one sequence. APFD-family values and the
/// first-failure time only exist on failing cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleMetrics {
    pub apfd: Option<f64>,
    pub rapfd: Option<f64>,
    pub nrpa: f64,
    pub first_fail_time: Option<f64>,
    pub total_time: f64,
}

fn check_shape(seq: &RankedSequence, cycle: &Cycle) -> Result<()> {
    if !seq.is_permutation_of(cycle.len()) {
        return Err(Error::Metric(format!(
            "sequence of length {} is not a permutation of cycle {} ({} tests)",
            seq.len(),
            cycle.cycle_id,
            cycle.len()
        )));
    }
    Ok(())
}

fn failing_count(cycle: &Cycle) -> Result<usize> {
    match cycle.fail_count() {
        0 => Err(Error::Metric("APFD undefined on passing cycles".into())),
        m => Ok(m),
    }
}

pub fn apfd(seq: &RankedSequence, cycle: &Cycle) -> Result<f64> {
    check_shape(seq, cycle)?;
    let m = failing_count(cycle)? as f64;
    let n = cycle.len() as f64;
    let rank_sum: usize = seq
        .order
        .iter()
        .enumerate()
        .filter(|(_, &idx)| cycle.records[idx].verdict.is_fail())
        .map(|(pos, _)| pos + 1)
        .sum();
    Ok(1.0 - rank_sum as f64 / (n * m) + 1.0 / (2.0 * n))
}

/// `(APFD_min, APFD_max)` for the cycle's size and fault count.
pub fn apfd_bounds(cycle: &Cycle) -> Result<(f64, f64)> {
    let m = failing_count(cycle)? as f64;
    let n = cycle.len() as f64;
    let half = m / (2.0 * n);
    Ok((half, 1.0 - half))
}

/// APFD min-max normalized into [0, 1]. All-failing cycles return 1.
///
/// APFD is affine in the sum of failing ranks, so the normalization is
/// evaluated on that integer sum; optimal and worst orders give exactly 1 and 0.
pub fn rapfd(seq: &RankedSequence, cycle: &Cycle) -> Result<f64> {
    check_shape(seq, cycle)?;
    failing_count(cycle)?;
    let ranks = seq
        .order
        .iter()
        .enumerate()
        .filter(|(_, &idx)| cycle.records[idx].verdict.is_fail())
        .map(|(pos, _)| pos + 1);
    Ok(rapfd_from_failing_ranks(ranks, cycle.len()).expect("failing cycle"))
}

/// rAPFD from the 1-based positions of the failing tests in a sequence of
/// length `k`; `None` when nothing fails.
pub fn rapfd_from_failing_ranks(failing_ranks: impl IntoIterator<Item = usize>, k: usize) -> Option<f64> {
    let (mut m, mut sum) = (0usize, 0usize);
    for r in failing_ranks {
        m += 1;
        sum += r;
    }
    if m == 0 || k == 0 {
        return None;
    }
    if m == k {
        return Some(1.0);
    }
    let best = m * (m + 1) / 2;
    let worst = m * (2 * k - m + 1) / 2;
    Some((worst.saturating_sub(sum)) as f64 / (worst - best) as f64)
}

/// Rank percentile average of `seq` given the optimal order, closed form:
/// each test contributes `(k - rank_s + 1) * (k - rank_o + 1)`.
pub fn rpa(seq: &RankedSequence, optimal: &RankedSequence) -> Result<f64> {
    let k = seq.len();
    if !seq.is_permutation_of(k) || !optimal.is_permutation_of(k) || k == 0 {
        return Err(Error::Metric(
            "RPA needs two permutations of the same nonempty set".into(),
        ));
    }
    let rs = seq.ranks();
    let ro = optimal.ranks();
    let num: usize = (0..k).map(|t| (k - rs[t] + 1) * (k - ro[t] + 1)).sum();
    let kf = k as f64;
    Ok(num as f64 / (kf * kf * (kf + 1.0) / 2.0))
}

pub fn nrpa_against(seq: &RankedSequence, optimal: &RankedSequence) -> Result<f64> {
    Ok(rpa(seq, optimal)? / rpa(optimal, optimal)?)
}

/// NRPA against the cycle's optimal sequence; defined on every cycle.
pub fn nrpa(seq: &RankedSequence, cycle: &Cycle) -> Result<f64> {
    check_shape(seq, cycle)?;
    nrpa_against(seq, &optimal_sequence(cycle))
}

/// Cumulative duration up to and including the first failing test.
pub fn first_fail_time(seq: &RankedSequence, cycle: &Cycle) -> Option<f64> {
    let mut elapsed = 0.0;
    for &idx in &seq.order {
        let rec = &cycle.records[idx];
        elapsed += rec.duration;
        if rec.verdict.is_fail() {
            return Some(elapsed);
        }
    }
    None
}

/// Normalized time reduction over failing cycles given `(r, r_hat)` pairs:
/// `sum(r_hat - r) / sum(r_hat)`.
pub fn ntr(results: &[(f64, f64)]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Metric("NTR needs at least one failing cycle".into()));
    }
    let mut saved = 0.0;
    let mut total = 0.0;
    for &(r, r_hat) in results {
        if r > r_hat + 1e-9 * r_hat.abs().max(1.0) || r < 0.0 {
            return Err(Error::Metric(format!(
                "first-failure time {r} outside [0, {r_hat}]"
            )));
        }
        saved += r_hat - r;
        total += r_hat;
    }
    if total <= 0.0 {
        return Err(Error::Metric("NTR undefined: zero total execution time".into()));
    }
    Ok(saved / total)
}

pub fn cycle_metrics(seq: &RankedSequence, cycle: &Cycle) -> Result<CycleMetrics> {
    check_shape(seq, cycle)?;
    let (apfd_v, rapfd_v) = if cycle.is_failing() {
        (Some(apfd(seq, cycle)?), Some(rapfd(seq, cycle)?))
    } else {
        (None, None)
    };
    Ok(CycleMetrics {
        apfd: apfd_v,
        rapfd: rapfd_v,
        nrpa: nrpa(seq, cycle)?,
        first_fail_time: first_fail_time(seq, cycle),
        total_time: cycle.total_duration(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{TestRecord, Verdict};

    fn cycle_with_failures(k: usize, failing: &[usize]) -> Cycle {
        let records = (0..k)
            .map(|i| {
                let v = if failing.contains(&i) { Verdict::Fail } else { Verdict::Pass };
                TestRecord::new(format!("t{i}"), 1.0, v)
            })
            .collect();
        Cycle::new(0, 0, records)
    }

    fn identity(k: usize) -> RankedSequence {
        RankedSequence::from_order((0..k).collect())
    }

    #[test]
    fn apfd_failures_first() {
        let c = cycle_with_failures(10, &[0, 1]);
        assert!((apfd(&identity(10), &c).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(apfd_bounds(&c).unwrap(), (0.1, 0.9));
    }

    #[test]
    fn apfd_all_failing_is_half() {
        let c = cycle_with_failures(4, &[0, 1, 2, 3]);
        let rev = RankedSequence::from_order(vec![3, 1, 0, 2]);
        assert!((apfd(&rev, &c).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(apfd_bounds(&c).unwrap(), (0.5, 0.5));
        assert_eq!(rapfd(&rev, &c).unwrap(), 1.0);
    }

    #[test]
    fn apfd_middle_failure() {
        let c = cycle_with_failures(5, &[2]);
        assert!((apfd(&identity(5), &c).unwrap() - 0.5).abs() < 1e-12);
        assert!((rapfd(&identity(5), &c).unwrap() - 0.5).abs() < 1e-12);
        let (lo, hi) = apfd_bounds(&c).unwrap();
        assert!((lo - 0.1).abs() < 1e-12 && (hi - 0.9).abs() < 1e-12);
    }

    #[test]
    fn apfd_rejects_passing_cycle() {
        let c = cycle_with_failures(3, &[]);
        let err = apfd(&identity(3), &c).unwrap_err();
        assert!(err.to_string().contains("APFD undefined on passing cycles"));
        assert!(rapfd(&identity(3), &c).is_err());
        assert!(apfd_bounds(&c).is_err());
    }

    #[test]
    fn rapfd_extremes() {
        let c = cycle_with_failures(6, &[0, 1]);
        assert_eq!(rapfd(&identity(6), &c).unwrap(), 1.0);
        let last = RankedSequence::from_order(vec![2, 3, 4, 5, 0, 1]);
        assert!(rapfd(&last, &c).unwrap().abs() < 1e-12);
    }

    #[test]
    fn nrpa_worked_example() {
        // Priorities 5..1; the scheduled order swaps priorities 4 and 2.
        let optimal = identity(5);
        let scheduled = RankedSequence::from_order(vec![0, 3, 2, 1, 4]);
        let v = nrpa_against(&scheduled, &optimal).unwrap();
        assert!((v - 51.0 / 55.0).abs() < 1e-12);
        assert!((v - 0.93).abs() < 0.005);
        assert_eq!(nrpa_against(&optimal, &optimal).unwrap(), 1.0);
        let reversed = RankedSequence::from_order(vec![4, 3, 2, 1, 0]);
        assert!((nrpa_against(&reversed, &optimal).unwrap() - 35.0 / 55.0).abs() < 1e-12);
    }

    #[test]
    fn ntr_examples() {
        let c = Cycle::new(
            0,
            0,
            vec![
                TestRecord::new("a", 2.0, Verdict::Fail),
                TestRecord::new("b", 3.0, Verdict::Pass),
                TestRecord::new("c", 5.0, Verdict::Pass),
            ],
        );
        let r = first_fail_time(&identity(3), &c).unwrap();
        assert_eq!(r, 2.0);
        assert!((ntr(&[(r, c.total_duration())]).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(ntr(&[(10.0, 10.0)]).unwrap(), 0.0);
        assert!((ntr(&[(2.0, 10.0), (5.0, 10.0)]).unwrap() - 0.65).abs() < 1e-12);
        assert!(ntr(&[]).is_err());
        assert!(ntr(&[(11.0, 10.0)]).is_err());
    }

    #[test]
    fn cycle_metrics_on_passing_cycle() {
        let c = cycle_with_failures(3, &[]);
        let m = cycle_metrics(&identity(3), &c).unwrap();
        assert!(m.apfd.is_none() && m.rapfd.is_none() && m.first_fail_time.is_none());
        assert_eq!(m.nrpa, 1.0);
        assert_eq!(m.total_time, 3.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let c = cycle_with_failures(3, &[0]);
        assert!(apfd(&identity(2), &c).is_err());
        assert!(nrpa(&identity(4), &c).is_err());
    }
}
