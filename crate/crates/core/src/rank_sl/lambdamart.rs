use serde::{Deserialize, Serialize};

use super::mart::{TreeConfig, TreeEnsemble};
use super::tree::RegressionTree;
use super::LabeledSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaMartConfig {
    pub trees: usize,
    pub max_leaves: usize,
    pub shrinkage: f64,
    pub min_samples_per_leaf: usize,
    pub sigma: f64,
}

impl Default for LambdaMartConfig {
    fn default() -> Self {
        let t = TreeConfig::default();
        Self {
            trees: t.trees,
            max_leaves: t.max_leaves,
            shrinkage: t.shrinkage,
            min_samples_per_leaf: t.min_samples_per_leaf,
            sigma: 1.0,
        }
    }
}

impl LambdaMartConfig {
    pub fn tree_config(&self) -> TreeConfig {
        TreeConfig {
            trees: self.trees,
            max_leaves: self.max_leaves,
            shrinkage: self.shrinkage,
            min_samples_per_leaf: self.min_samples_per_leaf,
        }
    }
}

fn gain(label: f64) -> f64 {
    label.exp2() - 1.0
}

fn discount(pos: usize) -> f64 {
    1.0 / ((pos + 2) as f64).log2()
}

/// Lambda gradients of one group under NDCG.
///
/// For every pair with `label_i > label_j`,
/// `lambda_ij = -sigma / (1 + exp(sigma (s_i - s_j))) * |dNDCG_ij|`,
/// accumulated as `lambda_i += lambda_ij`, `lambda_j -= lambda_ij`.
/// Also returns the second-order weights used for Newton leaf values.
pub fn lambda_gradients(labels: &[f64], scores: &[f64], sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let n = labels.len();
    let mut lambdas = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut position = vec![0; n];
    for (p, &i) in order.iter().enumerate() {
        position[i] = p;
    }
    let mut ideal: Vec<f64> = labels.iter().map(|&l| gain(l)).collect();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg: f64 = ideal.iter().enumerate().map(|(p, g)| g * discount(p)).sum();
    if idcg <= 0.0 {
        return (lambdas, weights);
    }
    for i in 0..n {
        for j in 0..n {
            if labels[i] <= labels[j] {
                continue;
            }
            let delta = ((gain(labels[i]) - gain(labels[j]))
                * (discount(position[i]) - discount(position[j])))
            .abs()
                / idcg;
            let rho = 1.0 / (1.0 + (sigma * (scores[i] - scores[j])).exp());
            let lambda_ij = -sigma * rho * delta;
            lambdas[i] += lambda_ij;
            lambdas[j] -= lambda_ij;
            let w = sigma * sigma * delta * rho * (1.0 - rho);
            weights[i] += w;
            weights[j] += w;
        }
    }
    (lambdas, weights)
}

/// Gradient boosting on lambda gradients, starting from the mean label.
pub fn fit_lambdamart(set: &LabeledSet, cfg: &LambdaMartConfig) -> Result<TreeEnsemble> {
    set.ensure_nonempty()?;
    let base = set.instances().map(|i| i.label).sum::<f64>() / set.len() as f64;
    let model = TreeEnsemble {
        width: set.width,
        base_score: base,
        shrinkage: cfg.shrinkage,
        trees: Vec::new(),
    };
    continue_lambdamart(model, set, cfg)
}

pub fn continue_lambdamart(mut model: TreeEnsemble, set: &LabeledSet, cfg: &LambdaMartConfig) -> Result<TreeEnsemble> {
    set.ensure_nonempty()?;
    cfg.tree_config().check()?;
    if model.width != set.width {
        return Err(Error::Training(format!(
            "ensemble width {} does not match data width {}",
            model.width, set.width
        )));
    }
    let rows: Vec<&[f64]> = set.instances().map(|i| i.features.as_slice()).collect();
    let offsets = set.offsets();
    let mut current: Vec<f64> = rows.iter().map(|r| model.score(r)).collect();
    for _ in 0..cfg.trees {
        let mut targets = vec![0.0; rows.len()];
        let mut hess = vec![0.0; rows.len()];
        for (g, group) in set.groups.iter().enumerate() {
            let o = offsets[g];
            let n = group.instances.len();
            let labels: Vec<f64> = group.instances.iter().map(|i| i.label).collect();
            let (lam, w) = lambda_gradients(&labels, &current[o..o + n], cfg.sigma);
            for k in 0..n {
                targets[o + k] = -lam[k];
                hess[o + k] = w[k];
            }
        }
        if targets.iter().all(|&t| t == 0.0) {
            break;
        }
        let (mut tree, assign) =
            RegressionTree::fit(&rows, &targets, cfg.max_leaves, cfg.min_samples_per_leaf);
        let mut sums: std::collections::BTreeMap<usize, (f64, f64)> = Default::default();
        for (i, &leaf) in assign.iter().enumerate() {
            let e = sums.entry(leaf).or_default();
            e.0 += targets[i];
            e.1 += hess[i];
        }
        for (leaf, (num, den)) in sums {
            tree.set_leaf_value(leaf, if den > 1e-12 { num / den } else { 0.0 });
        }
        for (c, r) in current.iter_mut().zip(&rows) {
            *c += model.shrinkage * tree.predict(r);
        }
        model.trees.push(tree);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;

    #[test]
    fn equal_labels_give_zero_lambdas() {
        let (lam, _) = lambda_gradients(&[0.0, 0.0, 0.0], &[0.3, 0.1, 0.2], 1.0);
        assert!(lam.iter().all(|&l| l == 0.0));
        let s = set(vec![group(&[(vec![0.0], 1.0), (vec![1.0], 1.0)])]);
        let m = fit_lambdamart(&s, &LambdaMartConfig::default()).unwrap();
        assert!(m.trees.is_empty());
        assert_eq!(m.score(&[0.5]), 1.0);
    }

    #[test]
    fn tied_scores_use_half_sigmoid() {
        // Failing test in position 2 of 2: |dNDCG| = (1 - 1/log2 3) / 1.
        let (lam, _) = lambda_gradients(&[0.0, 1.0], &[0.5, 0.5], 2.0);
        let delta = 1.0 - 1.0 / 3f64.log2();
        assert!((lam[1] - (-2.0 / 2.0 * delta)).abs() < 1e-12);
        assert!((lam[0] + lam[1]).abs() < 1e-12);
    }

    #[test]
    fn failing_lambda_balances_passing_lambdas() {
        let labels = [0.0, 1.0, 0.0, 0.0];
        let (lam, _) = lambda_gradients(&labels, &[0.9, -0.2, 0.4, 0.0], 1.0);
        let passing: f64 = [0, 2, 3].iter().map(|&i| lam[i]).sum();
        assert!((lam[1] + passing).abs() < 1e-12);
        assert!(lam[1] < 0.0);
    }

    #[test]
    fn learns_separable_ranking() {
        let data = separable(30, 10, 5);
        let m = fit_lambdamart(&data, &LambdaMartConfig::default()).unwrap();
        assert!(m.score(&[0.9, 0.0]) > m.score(&[-0.5, 0.0]));
    }
}
