use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PairSet;
use crate::error::{Error, Result};
use crate::nn::{Activation, Gradients, Mlp, Standardizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RankNetConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for RankNetConfig {
    fn default() -> Self {
        Self {
            hidden: 10,
            epochs: 100,
            learning_rate: 1e-3,
        }
    }
}

/// Standardized inputs feeding a scalar-output network. `epochs_trained`
/// keeps the shuffle schedule continuous across warm starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkScorer {
    pub standardizer: Standardizer,
    pub net: Mlp,
    pub seed: u64,
    pub epochs_trained: usize,
}

impl NetworkScorer {
    pub fn new(standardizer: Standardizer, sizes: &[usize], hidden: Activation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            net: Mlp::new(sizes, hidden, &mut rng),
            standardizer,
            seed,
            epochs_trained: 0,
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.net.forward(&self.standardizer.transform(x))[0]
    }

    pub(crate) fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Pair loss `-ln sigmoid(s(x+) - s(x-))` and its parameter gradient.
pub fn pair_loss_and_grad(model: &NetworkScorer, better: &[f64], worse: &[f64]) -> (f64, Gradients) {
    let tb = model.net.forward_trace(&model.standardizer.transform(better));
    let tw = model.net.forward_trace(&model.standardizer.transform(worse));
    let diff = tb.output()[0] - tw.output()[0];
    let loss = log1p_exp(-diff);
    // dL/d(diff) = -sigmoid(-diff)
    let d = -1.0 / (1.0 + diff.exp());
    let mut grads = Gradients::zeros_like(&model.net);
    model.net.backward(&tb, &[d], &mut grads);
    model.net.backward(&tw, &[-d], &mut grads);
    (loss, grads)
}

fn check(cfg: &RankNetConfig) -> Result<()> {
    if cfg.hidden == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("RankNet needs hidden >= 1 and learning_rate > 0".into()));
    }
    Ok(())
}

pub fn fit_ranknet(pairs: &PairSet<'_>, cfg: &RankNetConfig, seed: u64) -> Result<NetworkScorer> {
    check(cfg)?;
    let set = pairs.set;
    let standardizer = Standardizer::fit(set.instances().map(|i| i.features.as_slice()), set.width);
    let model = NetworkScorer::new(standardizer, &[set.width, cfg.hidden, 1], Activation::Tanh, seed);
    continue_ranknet(model, pairs, cfg)
}

/// Runs `cfg.epochs` more epochs of per-pair SGD; the standardizer is kept.
pub fn continue_ranknet(mut model: NetworkScorer, pairs: &PairSet<'_>, cfg: &RankNetConfig) -> Result<NetworkScorer> {
    check(cfg)?;
    if pairs.is_empty() {
        return Err(Error::Training("RankNet needs at least one ordered pair".into()));
    }
    if model.standardizer.width() != pairs.set.width {
        return Err(Error::Training("RankNet width mismatch".into()));
    }
    for _ in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut rng = model.epoch_rng(model.epochs_trained);
        order.shuffle(&mut rng);
        for &k in &order {
            let p = &pairs.pairs[k];
            let (_, grads) = pair_loss_and_grad(&model, &pairs.better(p).features, &pairs.worse(p).features);
            model.net.apply(&grads, -cfg.learning_rate);
        }
        if !model.net.is_finite() {
            return Err(Error::Training("RankNet parameters diverged".into()));
        }
        model.epochs_trained += 1;
    }
    Ok(model)
}
