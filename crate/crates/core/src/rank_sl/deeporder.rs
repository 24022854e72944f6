use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ranknet::NetworkScorer;
use super::LabeledSet;
use crate::error::{Error, Result};
use crate::nn::{Activation, Gradients, Standardizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeepOrderConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for DeepOrderConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32, 32],
            epochs: 150,
            learning_rate: 0.01,
            batch_size: 32,
        }
    }
}

/// Mean squared error over a batch and its parameter gradient.
pub fn deeporder_batch_loss_and_grad(model: &NetworkScorer, rows: &[&[f64]], targets: &[f64]) -> (f64, Gradients) {
    let mut grads = Gradients::zeros_like(&model.net);
    let n = rows.len().max(1) as f64;
    let mut loss = 0.0;
    for (x, &t) in rows.iter().zip(targets) {
        let trace = model.net.forward_trace(&model.standardizer.transform(x));
        let err = trace.output()[0] - t;
        loss += err * err;
        model.net.backward(&trace, &[2.0 * err / n], &mut grads);
    }
    (loss / n, grads)
}

fn check(cfg: &DeepOrderConfig) -> Result<()> {
    if cfg.hidden.contains(&0) || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config(
            "DeepOrder needs positive layer sizes, batch_size and learning_rate".into(),
        ));
    }
    Ok(())
}

/// Pointwise regression of heuristic priorities.
pub fn fit_deeporder(set: &LabeledSet, cfg: &DeepOrderConfig, seed: u64) -> Result<NetworkScorer> {
    check(cfg)?;
    set.ensure_nonempty()?;
    let standardizer = Standardizer::fit(set.instances().map(|i| i.features.as_slice()), set.width);
    let mut sizes = vec![set.width];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let model = NetworkScorer::new(standardizer, &sizes, Activation::Relu, seed);
    continue_deeporder(model, set, cfg)
}

pub fn continue_deeporder(mut model: NetworkScorer, set: &LabeledSet, cfg: &DeepOrderConfig) -> Result<NetworkScorer> {
    check(cfg)?;
    set.ensure_nonempty()?;
    if model.standardizer.width() != set.width {
        return Err(Error::Training("DeepOrder width mismatch".into()));
    }
    let rows: Vec<&[f64]> = set.instances().map(|i| i.features.as_slice()).collect();
    let labels: Vec<f64> = set.instances().map(|i| i.label).collect();
    for _ in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let mut rng = model.epoch_rng(model.epochs_trained);
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| rows[i]).collect();
            let ts: Vec<f64> = chunk.iter().map(|&i| labels[i]).collect();
            let (_, grads) = deeporder_batch_loss_and_grad(&model, &xs, &ts);
            model.net.apply(&grads, -cfg.learning_rate);
        }
        if !model.net.is_finite() {
            return Err(Error::Training("DeepOrder parameters diverged".into()));
        }
        model.epochs_trained += 1;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;

    #[test]
    fn zero_labels_learn_zero() {
        let rows: Vec<(Vec<f64>, f64)> = (0..200).map(|i| (vec![i as f64, (i % 3) as f64], 0.0)).collect();
        let s = set(vec![group(&rows)]);
        let cfg = DeepOrderConfig { epochs: 500, ..DeepOrderConfig::default() };
        let m = fit_deeporder(&s, &cfg, 3).unwrap();
        for (x, _) in &rows {
            assert!(m.score(x).abs() < 0.05, "{}", m.score(x));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut model = NetworkScorer::new(Standardizer::identity(2), &[2, 4, 3, 1], Activation::Relu, 9);
        // Nonzero biases keep every unit away from the ReLU kink.
        for l in &mut model.net.layers {
            l.bias.iter_mut().for_each(|b| *b = 0.1);
        }
        let xs: Vec<&[f64]> = vec![&[0.3, -0.7], &[1.2, 0.4], &[-0.5, 0.9]];
        let ts = [0.2, 0.9, 0.1];
        let (_, grads) = deeporder_batch_loss_and_grad(&model, &xs, &ts);
        let analytic = grads.flat();
        let params = model.net.params();
        let h = 1e-6;
        for i in 0..params.len() {
            let mut plus = model.clone();
            plus.net.set_param(i, params[i] + h);
            let mut minus = model.clone();
            minus.net.set_param(i, params[i] - h);
            let numeric = (deeporder_batch_loss_and_grad(&plus, &xs, &ts).0
                - deeporder_batch_loss_and_grad(&minus, &xs, &ts).0)
                / (2.0 * h);
            assert!(
                (numeric - analytic[i]).abs() <= 1e-5 * numeric.abs().max(1e-3),
                "param {i}: {numeric} vs {}",
                analytic[i]
            );
        }
    }

    #[test]
    fn linear_labels_give_monotone_predictions() {
        let rows: Vec<(Vec<f64>, f64)> = (0..120)
            .map(|i| {
                let x = i as f64 / 120.0;
                (vec![x, ((i * 37) % 11) as f64], 0.8 * x)
            })
            .collect();
        let s = set(vec![group(&rows)]);
        let m = fit_deeporder(&s, &DeepOrderConfig::default(), 4).unwrap();
        // Held-out points between training values, noise feature fixed.
        let preds: Vec<f64> = (0..50).map(|i| m.score(&[(i as f64 + 0.25) / 50.0, 5.0])).collect();
        let n = preds.len();
        let concordant = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| preds[j] > preds[i])
            .count();
        let pairs = n * (n - 1) / 2;
        let tau = (2.0 * concordant as f64 - pairs as f64) / pairs as f64;
        assert!(tau >= 0.9, "tau {tau}");
    }
}
