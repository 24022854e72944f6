//! Online reinforcement-learning prioritizers.
//!
//! Agents see a cycle's test ids and features, commit to an order, and only
//! then receive the cycle's verdicts to learn from.

mod agents;
pub mod bandit;
pub mod env;
pub mod policy;
pub mod reward;

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use agents::{signed_log1p, FrrmabAgent, PgAgent, RetecsAgent, RetecsConfig, RlAgent};
pub use bandit::{frrmab_select, frrmab_update, ArmState, BanditConfig, BanditState};
pub use env::{merge_sort_by, run_episode, step_floor, Episode, Formulation, Query, Step, Trajectory, SCORE_BINS};
pub use policy::{
    exact_policy_gradient, expected_return, policy_shape, policy_update, PolicyConfig, PolicyParams, WeightedDecision,
};
pub use reward::{compute_reward, RewardKind};

use crate::domain::{Cycle, RankedSequence};
use crate::error::{Error, Result};
use crate::features::CycleFeatures;

/// What an agent may look at before committing to an order.
#[derive(Debug, Clone)]
pub struct Observation<'a> {
    pub cycle_id: u64,
    pub test_ids: Vec<&'a str>,
    pub features: &'a CycleFeatures,
}

impl<'a> Observation<'a> {
    pub fn new(cycle: &'a Cycle, features: &'a CycleFeatures) -> Result<Self> {
        if features.len() != cycle.len() {
            return Err(Error::InvalidData(format!(
                "cycle {} has {} records but {} feature rows",
                cycle.cycle_id,
                cycle.len(),
                features.len()
            )));
        }
        Ok(Self {
            cycle_id: cycle.cycle_id,
            test_ids: cycle.records.iter().map(|r| r.test_id.as_str()).collect(),
            features,
        })
    }
}

pub trait Agent {
    fn prioritize(&mut self, obs: &Observation<'_>) -> Result<RankedSequence>;
    /// Feedback after the order for `cycle` was fixed.
    fn learn(&mut self, obs: &Observation<'_>, seq: &RankedSequence, cycle: &Cycle) -> Result<()>;
    fn is_frozen(&self) -> bool;
    fn set_frozen(&mut self, frozen: bool);
}

/// Order produced for a cycle plus wall-clock timings in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineStep {
    pub sequence: RankedSequence,
    pub prediction_time_s: f64,
    pub training_time_s: f64,
}

/// Predict, then (unless frozen) reveal the cycle and learn.
pub fn online_cycle_update<A: Agent + ?Sized>(agent: &mut A, cycle: &Cycle, features: &CycleFeatures) -> Result<OnlineStep> {
    if cycle.is_empty() {
        return Err(Error::InvalidData(format!("cycle {} has no tests", cycle.cycle_id)));
    }
    let obs = Observation::new(cycle, features)?;
    let start = Instant::now();
    let sequence = agent.prioritize(&obs)?;
    let prediction_time_s = start.elapsed().as_secs_f64();
    if !sequence.is_permutation_of(cycle.len()) {
        return Err(Error::Training("agent returned an incomplete order".into()));
    }
    let mut training_time_s = 0.0;
    if !agent.is_frozen() {
        let start = Instant::now();
        agent.learn(&obs, &sequence, cycle)?;
        training_time_s = start.elapsed().as_secs_f64();
    }
    Ok(OnlineStep {
        sequence,
        prediction_time_s,
        training_time_s,
    })
}

pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a simple combination.
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hyperparameters of every online agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RLConfig {
    pub seed: u64,
    pub frrmab: BanditConfig,
    pub retecs: RetecsConfig,
    pub policy: PolicyConfig,
}

impl Default for RLConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            frrmab: BanditConfig::default(),
            retecs: RetecsConfig::default(),
            policy: PolicyConfig::default(),
        }
    }
}

/// Saved agent with its technique name; the frozen flag is part of the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub technique: String,
    pub agent: RlAgent,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{TestRecord, Verdict};
    use crate::metrics::rapfd;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cycle(id: u64, verdicts: &[u8]) -> (Cycle, CycleFeatures) {
        let c = Cycle::new(
            id,
            id as i64 * 100,
            verdicts
                .iter()
                .enumerate()
                .map(|(i, &v)| TestRecord::new(format!("t{i}"), 1.0, Verdict::from_u8(v).unwrap()))
                .collect(),
        );
        let f = CycleFeatures::from_rows(&(0..verdicts.len()).map(|i| vec![i as f64, 1.0]).collect::<Vec<_>>());
        (c, f)
    }

    fn agents() -> Vec<RlAgent> {
        let policy = PolicyConfig { episodes_per_cycle: 3, hidden: 4, ..PolicyConfig::default() };
        vec![
            RlAgent::Frrmab(FrrmabAgent::new(BanditConfig::default()).unwrap()),
            RlAgent::Retecs(RetecsAgent::new(RetecsConfig::default(), 3).unwrap()),
            RlAgent::PolicyGradient(PgAgent::new(Formulation::Pointwise, policy.clone(), 3).unwrap()),
            RlAgent::PolicyGradient(PgAgent::new(Formulation::Pairwise, policy.clone(), 3).unwrap()),
            RlAgent::PolicyGradient(PgAgent::new(Formulation::Listwise, policy, 3).unwrap()),
        ]
    }

    #[test]
    fn frozen_agents_predict_without_changing() {
        let (c, f) = cycle(1, &[0, 1, 0, 0, 1]);
        for mut a in agents() {
            online_cycle_update(&mut a, &c, &f).unwrap();
            a.set_frozen(true);
            let before = a.clone();
            let s1 = online_cycle_update(&mut a, &c, &f).unwrap();
            let s2 = online_cycle_update(&mut a, &c, &f).unwrap();
            assert_eq!(a, before);
            assert_eq!(s1.sequence, s2.sequence);
            assert_eq!(s1.training_time_s, 0.0);
        }
    }

    #[test]
    fn cold_start_yields_permutation() {
        let (c, f) = cycle(1, &[0, 0, 1, 0]);
        for mut a in agents() {
            let step = online_cycle_update(&mut a, &c, &f).unwrap();
            assert!(step.sequence.is_permutation_of(4));
        }
    }

    #[test]
    fn bandit_improves_on_repeated_cycle() {
        let (c, f) = cycle(1, &[0, 0, 0, 1, 0, 1]);
        let mut a = FrrmabAgent::new(BanditConfig::default()).unwrap();
        let first = online_cycle_update(&mut a, &c, &f).unwrap();
        let second = online_cycle_update(&mut a, &c, &f).unwrap();
        assert!(rapfd(&second.sequence, &c).unwrap() >= rapfd(&first.sequence, &c).unwrap());
        assert_eq!(rapfd(&second.sequence, &c).unwrap(), 1.0);
    }

    #[test]
    fn checkpoint_round_trip_keeps_frozen_flag() {
        let (c, f) = cycle(1, &[1, 0, 0]);
        let mut a = agents().remove(1);
        online_cycle_update(&mut a, &c, &f).unwrap();
        a.set_frozen(true);
        let cp = Checkpoint { technique: "RETECS".into(), agent: a };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.json");
        cp.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, cp);
        assert!(back.agent.is_frozen());
    }

    #[test]
    fn toy_policy_learns_paying_action() {
        let cfg = PolicyConfig { hidden: 4, learning_rate: 0.5, ..PolicyConfig::default() };
        let mut p = PolicyParams::new(1, 2, &cfg, 5);
        let states = CycleFeatures::from_rows(&[vec![1.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = Query::Point { row: 0 };
        for _ in 0..200 {
            let action = p.sample(&states, &q, &mut rng).unwrap();
            let traj = Trajectory {
                steps: vec![Step { query: q.clone(), action, reward: action as f64 }],
            };
            policy_update(&mut p, &[(&states, &traj)]).unwrap();
        }
        assert!(p.probabilities(&states, &q)[1] >= 0.9);
    }

    #[test]
    fn mismatched_features_error() {
        let (c, _) = cycle(1, &[1, 0]);
        let f = CycleFeatures::from_rows(&[vec![1.0]]);
        let mut a = agents().remove(0);
        assert!(online_cycle_update(&mut a, &c, &f).is_err());
    }
}
