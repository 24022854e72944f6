use serde::{Deserialize, Serialize};

use crate::domain::{optimal_sequence, Cycle, RankedSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    /// The test's verdict (1 failing, 0 passing).
    Verdict,
    /// `1 - |rank - optimal rank| / (k - 1)` for failing tests, 0 otherwise.
    RankDistance,
    /// Failing test at position `p` earns `(k - p + 1) / k`; a passing test
    /// ahead of the last failure is charged the fraction of failures it delays.
    Timerank,
}

/// Per-record rewards (indexed like `cycle.records`), all within [-1, 1].
pub fn compute_reward(kind: RewardKind, seq: &RankedSequence, cycle: &Cycle) -> Result<Vec<f64>> {
    let k = cycle.len();
    if !seq.is_permutation_of(k) {
        return Err(Error::Metric(format!(
            "sequence is not a permutation of the cycle's {k} records"
        )));
    }
    let fails: Vec<bool> = cycle.records.iter().map(|r| r.verdict.is_fail()).collect();
    let rewards = match kind {
        RewardKind::Verdict => cycle.records.iter().map(|r| r.verdict.as_f64()).collect(),
        RewardKind::RankDistance => {
            if k == 1 {
                return Ok(vec![1.0]);
            }
            let ranks = seq.ranks();
            let optimal = optimal_sequence(cycle).ranks();
            (0..k)
                .map(|i| {
                    if fails[i] {
                        1.0 - ranks[i].abs_diff(optimal[i]) as f64 / (k - 1) as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        RewardKind::Timerank => {
            let m = fails.iter().filter(|&&f| f).count();
            let mut out = vec![0.0; k];
            if m == 0 {
                return Ok(out);
            }
            let mut remaining = m;
            for (pos, &i) in seq.order.iter().enumerate() {
                if remaining == 0 {
                    break;
                }
                if fails[i] {
                    out[i] = (k - pos) as f64 / k as f64;
                    remaining -= 1;
                } else {
                    out[i] = -(remaining as f64) / m as f64;
                }
            }
            out
        }
    };
    Ok(rewards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{TestRecord, Verdict};

    fn cycle(spec: &[(f64, u8)]) -> Cycle {
        Cycle::new(
            1,
            0,
            spec.iter()
                .enumerate()
                .map(|(i, &(d, v))| TestRecord::new(format!("t{i}"), d, Verdict::from_u8(v).unwrap()))
                .collect(),
        )
    }

    #[test]
    fn verdict_on_all_passing_is_zero() {
        let c = cycle(&[(1.0, 0), (2.0, 0)]);
        let r = compute_reward(RewardKind::Verdict, &RankedSequence::from_order(vec![1, 0]), &c).unwrap();
        assert_eq!(r, vec![0.0, 0.0]);
    }

    #[test]
    fn rank_distance_at_optimal_position_is_one() {
        let c = cycle(&[(1.0, 0), (2.0, 1), (3.0, 0)]);
        let r = compute_reward(RewardKind::RankDistance, &RankedSequence::from_order(vec![1, 0, 2]), &c).unwrap();
        assert_eq!(r, vec![0.0, 1.0, 0.0]);
        let r = compute_reward(RewardKind::RankDistance, &RankedSequence::from_order(vec![0, 2, 1]), &c).unwrap();
        assert_eq!(r[1], 0.0);
        let single = cycle(&[(1.0, 0)]);
        let r = compute_reward(RewardKind::RankDistance, &RankedSequence::from_order(vec![0]), &single).unwrap();
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn timerank_example() {
        let c = cycle(&[(1.0, 1), (1.0, 1), (1.0, 0), (1.0, 0)]);
        let r = compute_reward(RewardKind::Timerank, &RankedSequence::from_order(vec![0, 1, 2, 3]), &c).unwrap();
        assert_eq!(r, vec![1.0, 0.75, 0.0, 0.0]);
        // Passing test ahead of both failures is charged 1, ahead of one 0.5.
        let r = compute_reward(RewardKind::Timerank, &RankedSequence::from_order(vec![2, 0, 3, 1]), &c).unwrap();
        assert_eq!(r, vec![0.75, 0.25, -1.0, -0.5]);
    }

    #[test]
    fn non_permutation_errors() {
        let c = cycle(&[(1.0, 1), (1.0, 0)]);
        let seq = RankedSequence::from_order(vec![0]);
        assert!(compute_reward(RewardKind::Verdict, &seq, &c).is_err());
    }
}
