use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bandit::{frrmab_select, frrmab_update, BanditConfig, BanditState};
use super::env::{run_episode, Formulation};
use super::policy::{policy_shape, policy_update, PolicyConfig, PolicyParams};
use super::reward::{compute_reward, RewardKind};
use super::{mix_seed, Agent, Observation};
use crate::domain::{Cycle, RankedSequence};
use crate::error::{Error, Result};
use crate::features::CycleFeatures;
use crate::nn::{Activation, Mlp, Standardizer};
use crate::rank_sl::{deeporder_batch_loss_and_grad, NetworkScorer};

/// `sign(x) ln(1 + |x|)`: a fixed squashing of raw features so online agents
/// need no fitted statistics.
pub fn signed_log1p(features: &CycleFeatures) -> CycleFeatures {
    CycleFeatures {
        width: features.width,
        data: features.data.iter().map(|&x| x.signum() * x.abs().ln_1p()).collect(),
    }
}

/// Bandit agent: one arm per test id, credit from the configured reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrrmabAgent {
    pub state: BanditState,
    pub frozen: bool,
}

impl FrrmabAgent {
    pub fn new(cfg: BanditConfig) -> Result<Self> {
        cfg.check()?;
        Ok(Self {
            state: BanditState::new(cfg),
            frozen: false,
        })
    }
}

impl Agent for FrrmabAgent {
    fn prioritize(&mut self, obs: &Observation<'_>) -> Result<RankedSequence> {
        Ok(frrmab_select(&self.state, &obs.test_ids))
    }

    fn learn(&mut self, obs: &Observation<'_>, seq: &RankedSequence, cycle: &Cycle) -> Result<()> {
        let rewards = compute_reward(self.state.config.reward, seq, cycle)?;
        frrmab_update(&mut self.state, &obs.test_ids, &rewards)
    }

    fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetecsConfig {
    pub hidden: usize,
    /// Most recent (state, reward) pairs kept for retraining.
    pub memory: usize,
    pub epochs_per_cycle: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub reward: RewardKind,
}

impl Default for RetecsConfig {
    fn default() -> Self {
        Self {
            hidden: 12,
            memory: 1000,
            epochs_per_cycle: 10,
            learning_rate: 0.05,
            batch_size: 32,
            reward: RewardKind::Verdict,
        }
    }
}

/// Shallow network regressing each test's reward from its state; tests
/// run in descending predicted reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetecsAgent {
    pub config: RetecsConfig,
    pub seed: u64,
    pub model: Option<NetworkScorer>,
    pub experience: VecDeque<(Vec<f64>, f64)>,
    pub frozen: bool,
}

impl RetecsAgent {
    pub fn new(config: RetecsConfig, seed: u64) -> Result<Self> {
        if config.hidden == 0 || config.memory == 0 || config.batch_size == 0 || !(config.learning_rate > 0.0) {
            return Err(Error::Config("RETECS needs positive sizes and learning_rate".into()));
        }
        Ok(Self {
            config,
            seed,
            model: None,
            experience: VecDeque::new(),
            frozen: false,
        })
    }

    fn model_for(&mut self, width: usize) -> Result<&mut NetworkScorer> {
        let hidden = self.config.hidden;
        let seed = self.seed;
        let model = self.model.get_or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            NetworkScorer {
                standardizer: Standardizer::identity(width),
                net: Mlp::new(&[width, hidden, 1], Activation::Tanh, &mut rng),
                seed,
                epochs_trained: 0,
            }
        });
        if model.standardizer.width() != width {
            return Err(Error::InvalidData(format!(
                "feature width {width} does not match agent width {}",
                model.standardizer.width()
            )));
        }
        Ok(model)
    }
}

impl Agent for RetecsAgent {
    fn prioritize(&mut self, obs: &Observation<'_>) -> Result<RankedSequence> {
        let rows = signed_log1p(obs.features);
        let model = self.model_for(rows.width)?;
        let scores: Vec<f64> = rows.rows().map(|r| model.score(r)).collect();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Training("RETECS produced a non-finite score".into()));
        }
        Ok(RankedSequence::from_scores(scores))
    }

    fn learn(&mut self, obs: &Observation<'_>, seq: &RankedSequence, cycle: &Cycle) -> Result<()> {
        let rewards = compute_reward(self.config.reward, seq, cycle)?;
        let rows = signed_log1p(obs.features);
        for (r, &y) in rows.rows().zip(&rewards) {
            self.experience.push_back((r.to_vec(), y));
        }
        while self.experience.len() > self.config.memory {
            self.experience.pop_front();
        }
        let cfg = self.config.clone();
        let experience: Vec<(Vec<f64>, f64)> = self.experience.iter().cloned().collect();
        let model = self.model_for(rows.width)?;
        for _ in 0..cfg.epochs_per_cycle {
            let mut order: Vec<usize> = (0..experience.len()).collect();
            order.shuffle(&mut model.epoch_rng(model.epochs_trained));
            for chunk in order.chunks(cfg.batch_size) {
                let xs: Vec<&[f64]> = chunk.iter().map(|&i| experience[i].0.as_slice()).collect();
                let ts: Vec<f64> = chunk.iter().map(|&i| experience[i].1).collect();
                let (_, grads) = deeporder_batch_loss_and_grad(model, &xs, &ts);
                model.net.apply(&grads, -cfg.learning_rate);
            }
            model.epochs_trained += 1;
        }
        if !model.net.is_finite() {
            return Err(Error::Training("RETECS parameters diverged".into()));
        }
        Ok(())
    }

    fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }
}

/// Generic policy-gradient agent over one ranking formulation. Prediction is
/// greedy; learning runs `episodes_per_cycle` sampled episodes on the
/// revealed cycle, updating after each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgAgent {
    pub formulation: Formulation,
    pub config: PolicyConfig,
    pub seed: u64,
    pub params: Option<PolicyParams>,
    pub frozen: bool,
}

impl PgAgent {
    pub fn new(formulation: Formulation, config: PolicyConfig, seed: u64) -> Result<Self> {
        config.check()?;
        Ok(Self {
            formulation,
            config,
            seed,
            params: None,
            frozen: false,
        })
    }

    fn params_for(&mut self, width: usize) -> Result<&mut PolicyParams> {
        let (inputs, outputs) = policy_shape(self.formulation, width);
        let params = self
            .params
            .get_or_insert_with(|| PolicyParams::new(inputs, outputs, &self.config, self.seed));
        if params.net.input_width() != inputs {
            return Err(Error::InvalidData(format!(
                "feature width {width} does not match the policy input {}",
                params.net.input_width()
            )));
        }
        Ok(params)
    }
}

impl Agent for PgAgent {
    fn prioritize(&mut self, obs: &Observation<'_>) -> Result<RankedSequence> {
        let rows = signed_log1p(obs.features);
        let formulation = self.formulation;
        let params = self.params_for(rows.width)?;
        let ep = run_episode(formulation, rows.len(), &mut |q| Ok(params.greedy(&rows, q)), None)?;
        Ok(ep.sequence)
    }

    fn learn(&mut self, obs: &Observation<'_>, _seq: &RankedSequence, cycle: &Cycle) -> Result<()> {
        let rows = signed_log1p(obs.features);
        let formulation = self.formulation;
        let episodes = self.config.episodes_per_cycle;
        let seed = self.seed;
        let params = self.params_for(rows.width)?;
        for e in 0..episodes {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, obs.cycle_id, e as u64));
            let ep = run_episode(formulation, rows.len(), &mut |q| params.sample(&rows, q, &mut rng), Some(cycle))?;
            policy_update(params, &[(&rows, &ep.trajectory)])?;
        }
        Ok(())
    }

    fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }
}

/// Serializable union of the online agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "agent")]
pub enum RlAgent {
    Frrmab(FrrmabAgent),
    Retecs(RetecsAgent),
    PolicyGradient(PgAgent),
}

impl Agent for RlAgent {
    fn prioritize(&mut self, obs: &Observation<'_>) -> Result<RankedSequence> {
        match self {
            RlAgent::Frrmab(a) => a.prioritize(obs),
            RlAgent::Retecs(a) => a.prioritize(obs),
            RlAgent::PolicyGradient(a) => a.prioritize(obs),
        }
    }

    fn learn(&mut self, obs: &Observation<'_>, seq: &RankedSequence, cycle: &Cycle) -> Result<()> {
        match self {
            RlAgent::Frrmab(a) => a.learn(obs, seq, cycle),
            RlAgent::Retecs(a) => a.learn(obs, seq, cycle),
            RlAgent::PolicyGradient(a) => a.learn(obs, seq, cycle),
        }
    }

    fn is_frozen(&self) -> bool {
        match self {
            RlAgent::Frrmab(a) => a.is_frozen(),
            RlAgent::Retecs(a) => a.is_frozen(),
            RlAgent::PolicyGradient(a) => a.is_frozen(),
        }
    }

    fn set_frozen(&mut self, frozen: bool) {
        match self {
            RlAgent::Frrmab(a) => a.set_frozen(frozen),
            RlAgent::Retecs(a) => a.set_frozen(frozen),
            RlAgent::PolicyGradient(a) => a.set_frozen(frozen),
        }
    }
}
