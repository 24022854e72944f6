//! Softmax policies over the environments' decisions, trained by
//! REINFORCE with a learned scalar baseline and an entropy bonus.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{Formulation, Query, Trajectory, SCORE_BINS};
use crate::error::{Error, Result};
use crate::features::CycleFeatures;
use crate::nn::{Activation, Gradients, Mlp, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub baseline_learning_rate: f64,
    pub entropy_coef: f64,
    /// Discount of later step rewards; 0 credits each decision with its own reward.
    pub gamma: f64,
    pub episodes_per_cycle: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            learning_rate: 0.01,
            baseline_learning_rate: 0.1,
            entropy_coef: 0.01,
            gamma: 0.0,
            episodes_per_cycle: 200,
        }
    }
}

impl PolicyConfig {
    pub(crate) fn check(&self) -> Result<()> {
        let ok = self.hidden > 0
            && self.learning_rate > 0.0
            && self.baseline_learning_rate >= 0.0
            && self.entropy_coef >= 0.0
            && (0.0..=1.0).contains(&self.gamma);
        if !ok {
            return Err(Error::Config(
                "policy needs hidden >= 1, learning_rate > 0, nonnegative coefficients and gamma in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Network, baseline and optimizer settings of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub net: Mlp,
    pub baseline: f64,
    pub learning_rate: f64,
    pub baseline_learning_rate: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
}

/// One decision with its advantage and weight in a gradient estimate.
#[derive(Debug, Clone, Copy)]
pub struct WeightedDecision<'a> {
    pub query: &'a Query,
    pub action: usize,
    pub advantage: f64,
    pub weight: f64,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Network input size and output count for a formulation over `width` features.
pub fn policy_shape(formulation: Formulation, width: usize) -> (usize, usize) {
    match formulation {
        Formulation::Pointwise => (width, SCORE_BINS),
        Formulation::Pairwise => (2 * width, 2),
        Formulation::Listwise => (width, 1),
    }
}

impl PolicyParams {
    pub fn new(inputs: usize, outputs: usize, cfg: &PolicyConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            net: Mlp::new(&[inputs, cfg.hidden, outputs], Activation::Tanh, &mut rng),
            baseline: 0.0,
            learning_rate: cfg.learning_rate,
            baseline_learning_rate: cfg.baseline_learning_rate,
            entropy_coef: cfg.entropy_coef,
            gamma: cfg.gamma,
        }
    }

    fn forward(&self, rows: &CycleFeatures, query: &Query) -> (Vec<f64>, Vec<Trace>) {
        match query {
            Query::Point { row } => {
                let t = self.net.forward_trace(rows.row(*row));
                (t.output().to_vec(), vec![t])
            }
            Query::Pair { first, second } => {
                let mut x = rows.row(*first).to_vec();
                x.extend_from_slice(rows.row(*second));
                let t = self.net.forward_trace(&x);
                (t.output().to_vec(), vec![t])
            }
            Query::Pick { remaining } => {
                let traces: Vec<Trace> = remaining.iter().map(|&r| self.net.forward_trace(rows.row(r))).collect();
                (traces.iter().map(|t| t.output()[0]).collect(), traces)
            }
        }
    }

    /// Action probabilities; for picks, aligned with `remaining`.
    pub fn probabilities(&self, rows: &CycleFeatures, query: &Query) -> Vec<f64> {
        softmax(&self.forward(rows, query).0)
    }

    /// Maps an action to its index in the probability vector.
    fn action_index(query: &Query, action: usize) -> Result<usize> {
        match query {
            Query::Pick { remaining } => remaining
                .iter()
                .position(|&r| r == action)
                .ok_or_else(|| Error::Training(format!("pick {action} not among remaining tests"))),
            _ => Ok(action),
        }
    }

    fn index_to_action(query: &Query, index: usize) -> usize {
        match query {
            Query::Pick { remaining } => remaining[index],
            _ => index,
        }
    }

    /// Most probable action (lowest index on ties).
    pub fn greedy(&self, rows: &CycleFeatures, query: &Query) -> usize {
        let p = self.probabilities(rows, query);
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        Self::index_to_action(query, best)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rows: &CycleFeatures, query: &Query, rng: &mut R) -> Result<usize> {
        let p = self.probabilities(rows, query);
        let dist = WeightedIndex::new(&p).map_err(|e| Error::Training(format!("invalid action distribution: {e}")))?;
        Ok(Self::index_to_action(query, dist.sample(rng)))
    }

    /// `sum_i w_i [A_i grad log pi(a_i | s_i) + beta grad H(pi(. | s_i))]`.
    pub fn weighted_gradient(&self, rows: &CycleFeatures, decisions: &[WeightedDecision<'_>]) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(&self.net);
        for d in decisions {
            let (logits, traces) = self.forward(rows, d.query);
            let p = softmax(&logits);
            let a = Self::action_index(d.query, d.action)?;
            let entropy: f64 = -p.iter().filter(|&&q| q > 0.0).map(|q| q * q.ln()).sum::<f64>();
            let dz: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(j, &pj)| {
                    let dlog = f64::from(u8::from(j == a)) - pj;
                    let dent = if pj > 0.0 { -pj * (pj.ln() + entropy) } else { 0.0 };
                    d.weight * (d.advantage * dlog + self.entropy_coef * dent)
                })
                .collect();
            match d.query {
                Query::Pick { .. } => {
                    for (t, g) in traces.iter().zip(&dz) {
                        self.net.backward(t, &[*g], &mut grads);
                    }
                }
                _ => self.net.backward(&traces[0], &dz, &mut grads),
            }
        }
        Ok(grads)
    }
}

/// Discounted returns of one trajectory.
fn returns(t: &Trajectory, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; t.steps.len()];
    let mut acc = 0.0;
    for (i, s) in t.steps.iter().enumerate().rev() {
        acc = s.reward + gamma * acc;
        out[i] = acc;
    }
    out
}

/// One policy-gradient step over a batch of trajectories (each paired with
/// the inputs it was collected on); the baseline then moves toward the mean
/// return.
pub fn policy_update(params: &mut PolicyParams, batch: &[(&CycleFeatures, &Trajectory)]) -> Result<()> {
    let total: usize = batch.iter().map(|(_, t)| t.steps.len()).sum();
    if total == 0 {
        return Ok(());
    }
    let weight = 1.0 / total as f64;
    let mut grads = Gradients::zeros_like(&params.net);
    let mut mean_return = 0.0;
    for (rows, traj) in batch {
        let g = returns(traj, params.gamma);
        mean_return += g.iter().sum::<f64>() * weight;
        let decisions: Vec<WeightedDecision<'_>> = traj
            .steps
            .iter()
            .zip(&g)
            .map(|(s, &ret)| WeightedDecision {
                query: &s.query,
                action: s.action,
                advantage: ret - params.baseline,
                weight,
            })
            .collect();
        let part = params.weighted_gradient(rows, &decisions)?;
        for ((gw, gb), (pw, pb)) in grads.layers.iter_mut().zip(part.layers) {
            gw.iter_mut().zip(pw).for_each(|(a, b)| *a += b);
            gb.iter_mut().zip(pb).for_each(|(a, b)| *a += b);
        }
    }
    if !grads.is_finite() || !mean_return.is_finite() {
        return Err(Error::Training("policy gradient is not finite; training diverged".into()));
    }
    params.net.apply(&grads, params.learning_rate);
    params.baseline += params.baseline_learning_rate * (mean_return - params.baseline);
    if !params.net.is_finite() {
        return Err(Error::Training("policy parameters diverged".into()));
    }
    Ok(())
}

/// Expected return `J = sum_s p(s) sum_a pi(a|s) R(s, a)` of a one-step
/// problem whose states are the rows of `states`, with `R[s][a]` known.
pub fn expected_return(params: &PolicyParams, states: &CycleFeatures, state_probs: &[f64], payoff: &[Vec<f64>]) -> f64 {
    (0..states.len())
        .map(|s| {
            let p = params.probabilities(states, &Query::Point { row: s });
            state_probs[s] * p.iter().zip(&payoff[s]).map(|(a, r)| a * r).sum::<f64>()
        })
        .sum()
}

/// Exact score-function gradient of [`expected_return`]: every (state,
/// action) enumerated, weighted by its probability, zero baseline.
pub fn exact_policy_gradient(
    params: &PolicyParams,
    states: &CycleFeatures,
    state_probs: &[f64],
    payoff: &[Vec<f64>],
) -> Result<Gradients> {
    let queries: Vec<Query> = (0..states.len()).map(|row| Query::Point { row }).collect();
    let mut decisions = Vec::new();
    for (s, q) in queries.iter().enumerate() {
        let p = params.probabilities(states, q);
        for (a, &pa) in p.iter().enumerate() {
            decisions.push(WeightedDecision {
                query: q,
                action: a,
                advantage: payoff[s][a],
                weight: state_probs[s] * pa,
            });
        }
    }
    let no_entropy = PolicyParams {
        entropy_coef: 0.0,
        ..params.clone()
    };
    no_entropy.weighted_gradient(states, &decisions)
}

#[cfg(test)]
mod tests {
    use super::super::env::Step;
    use super::*;

    fn toy() -> (PolicyParams, CycleFeatures) {
        let cfg = PolicyConfig { hidden: 4, ..PolicyConfig::default() };
        let states = CycleFeatures::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        (PolicyParams::new(2, 2, &cfg, 17), states)
    }

    #[test]
    fn zero_advantage_without_entropy_leaves_params() {
        let (mut p, states) = toy();
        p.entropy_coef = 0.0;
        let before = p.clone();
        let traj = Trajectory {
            steps: vec![Step {
                query: Query::Point { row: 0 },
                action: 1,
                reward: 0.0,
            }],
        };
        policy_update(&mut p, &[(&states, &traj)]).unwrap();
        assert_eq!(p, before);
        // With entropy the parameters move even though advantages vanish.
        p.entropy_coef = 0.5;
        policy_update(&mut p, &[(&states, &traj)]).unwrap();
        assert_ne!(p.net, before.net);
    }

    #[test]
    fn exact_gradient_matches_finite_differences() {
        let (p, states) = toy();
        let probs = [0.3, 0.7];
        let payoff = vec![vec![1.0, -0.5], vec![0.2, 2.0]];
        let g = exact_policy_gradient(&p, &states, &probs, &payoff).unwrap().flat();
        let params = p.net.params();
        let h = 1e-6;
        for i in 0..params.len() {
            let mut plus = p.clone();
            plus.net.set_param(i, params[i] + h);
            let mut minus = p.clone();
            minus.net.set_param(i, params[i] - h);
            let fd = (expected_return(&plus, &states, &probs, &payoff)
                - expected_return(&minus, &states, &probs, &payoff))
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn pick_probabilities_cover_remaining() {
        let cfg = PolicyConfig { hidden: 3, ..PolicyConfig::default() };
        let p = PolicyParams::new(2, 1, &cfg, 2);
        let rows = CycleFeatures::from_rows(&[vec![0.1, 0.2], vec![0.3, -1.0], vec![2.0, 0.5]]);
        let q = Query::Pick { remaining: vec![2, 0] };
        let probs = p.probabilities(&rows, &q);
        assert_eq!(probs.len(), 2);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!([2, 0].contains(&p.greedy(&rows, &q)));
    }

    #[test]
    fn non_finite_rewards_error() {
        let (mut p, states) = toy();
        let traj = Trajectory {
            steps: vec![Step {
                query: Query::Point { row: 0 },
                action: 0,
                reward: f64::NAN,
            }],
        };
        assert!(policy_update(&mut p, &[(&states, &traj)]).is_err());
    }
}
