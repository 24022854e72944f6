//! Ranking environments. An episode turns a cycle's tests into a complete
//! order through a sequence of agent decisions.

use serde::{Deserialize, Serialize};

use crate::domain::{optimal_sequence, Cycle, RankedSequence};
use crate::error::{Error, Result};

/// Number of discrete score bins of the pointwise action space.
pub const SCORE_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    /// One score bin per test.
    Pointwise,
    /// Merge sort whose comparisons are agent decisions.
    Pairwise,
    /// Repeatedly pick the next test among the unplaced ones.
    Listwise,
}

/// What the agent is asked. Indices refer to the cycle's records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Query {
    /// Choose a bin in `0..SCORE_BINS` for `row`.
    Point { row: usize },
    /// Action 0 runs `first` before `second`, action 1 the reverse.
    Pair { first: usize, second: usize },
    /// Choose the next test; the action is a row from `remaining`.
    Pick { remaining: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub query: Query,
    pub action: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub sequence: RankedSequence,
    pub trajectory: Trajectory,
}

/// Minimum number of recorded steps per episode: `ceil(n log2 n)`.
pub fn step_floor(n: usize) -> usize {
    if n < 2 {
        return 0;
    }
    (n as f64 * (n as f64).log2()).ceil() as usize
}

/// Merge sort over `0..n`; `before(a, b)` says whether `a` runs before `b`.
pub fn merge_sort_by(n: usize, before: &mut impl FnMut(usize, usize) -> Result<bool>) -> Result<Vec<usize>> {
    fn sort(items: &[usize], before: &mut impl FnMut(usize, usize) -> Result<bool>) -> Result<Vec<usize>> {
        if items.len() <= 1 {
            return Ok(items.to_vec());
        }
        let mid = items.len() / 2;
        let left = sort(&items[..mid], before)?;
        let right = sort(&items[mid..], before)?;
        let mut out = Vec::with_capacity(items.len());
        let (mut i, mut j) = (0, 0);
        while i < left.len() && j < right.len() {
            if before(left[i], right[j])? {
                out.push(left[i]);
                i += 1;
            } else {
                out.push(right[j]);
                j += 1;
            }
        }
        out.extend_from_slice(&left[i..]);
        out.extend_from_slice(&right[j..]);
        Ok(out)
    }
    let items: Vec<usize> = (0..n).collect();
    sort(&items, before)
}

struct Rewarder {
    /// 1-based optimal rank per record.
    optimal: Vec<usize>,
    k: usize,
}

impl Rewarder {
    fn new(cycle: &Cycle) -> Self {
        Self {
            optimal: optimal_sequence(cycle).ranks(),
            k: cycle.len(),
        }
    }

    /// Target position of a record in [0, 1], 1 for the optimal first test.
    fn target(&self, row: usize) -> f64 {
        if self.k == 1 {
            1.0
        } else {
            (self.k - self.optimal[row]) as f64 / (self.k - 1) as f64
        }
    }

    fn point(&self, row: usize, bin: usize) -> f64 {
        1.0 - (bin as f64 / (SCORE_BINS - 1) as f64 - self.target(row)).abs()
    }

    fn pair(&self, first: usize, second: usize, action: usize) -> f64 {
        let first_wins = self.optimal[first] < self.optimal[second];
        if first_wins == (action == 0) {
            1.0
        } else {
            0.0
        }
    }

    fn pick(&self, row: usize, position: usize) -> f64 {
        if self.k == 1 {
            return 1.0;
        }
        1.0 - position.abs_diff(self.optimal[row]) as f64 / (self.k - 1) as f64
    }
}

/// Runs one episode over `n` tests. With `cycle` given, every step carries
/// the reward of its decision against the cycle's optimal order; otherwise
/// rewards are 0. Trajectories shorter than [`step_floor`] are padded by
/// replaying their own steps cyclically.
pub fn run_episode(
    formulation: Formulation,
    n: usize,
    chooser: &mut impl FnMut(&Query) -> Result<usize>,
    cycle: Option<&Cycle>,
) -> Result<Episode> {
    if n == 0 {
        return Err(Error::InvalidData("cannot run an episode on an empty cycle".into()));
    }
    if let Some(c) = cycle {
        if c.len() != n {
            return Err(Error::InvalidData(format!(
                "episode over {n} tests but cycle has {}",
                c.len()
            )));
        }
    }
    let rewarder = cycle.map(Rewarder::new);
    let mut steps = Vec::new();
    let sequence = match formulation {
        Formulation::Pointwise => {
            let mut scores = Vec::with_capacity(n);
            for row in 0..n {
                let query = Query::Point { row };
                let bin = chooser(&query)?;
                if bin >= SCORE_BINS {
                    return Err(Error::Training(format!("score bin {bin} out of range")));
                }
                let reward = rewarder.as_ref().map_or(0.0, |r| r.point(row, bin));
                steps.push(Step { query, action: bin, reward });
                scores.push(bin as f64);
            }
            RankedSequence::from_scores(scores)
        }
        Formulation::Pairwise => {
            let order = merge_sort_by(n, &mut |first, second| {
                let query = Query::Pair { first, second };
                let action = chooser(&query)?;
                if action > 1 {
                    return Err(Error::Training(format!("pair action {action} out of range")));
                }
                let reward = rewarder.as_ref().map_or(0.0, |r| r.pair(first, second, action));
                steps.push(Step { query, action, reward });
                Ok(action == 0)
            })?;
            RankedSequence::from_order(order)
        }
        Formulation::Listwise => {
            let mut remaining: Vec<usize> = (0..n).collect();
            let mut order = Vec::with_capacity(n);
            while !remaining.is_empty() {
                let query = Query::Pick {
                    remaining: remaining.clone(),
                };
                let row = chooser(&query)?;
                let Some(at) = remaining.iter().position(|&r| r == row) else {
                    return Err(Error::Training(format!("pick {row} is not an unplaced test")));
                };
                remaining.remove(at);
                order.push(row);
                let reward = rewarder.as_ref().map_or(0.0, |r| r.pick(row, order.len()));
                steps.push(Step { query, action: row, reward });
            }
            RankedSequence::from_order(order)
        }
    };
    let floor = step_floor(n);
    let recorded = steps.len();
    if recorded > 0 {
        for i in 0..floor.saturating_sub(recorded) {
            steps.push(steps[i % recorded].clone());
        }
    }
    Ok(Episode {
        sequence,
        trajectory: Trajectory { steps },
    })
}
