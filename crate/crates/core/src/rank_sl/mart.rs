use serde::{Deserialize, Serialize};

use super::tree::RegressionTree;
use super::LabeledSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeConfig {
    pub trees: usize,
    pub max_leaves: usize,
    pub shrinkage: f64,
    pub min_samples_per_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            trees: 50,
            max_leaves: 8,
            shrinkage: 0.1,
            min_samples_per_leaf: 1,
        }
    }
}

impl TreeConfig {
    pub(crate) fn check(&self) -> Result<()> {
        if self.max_leaves == 0 || !(self.shrinkage > 0.0) {
            return Err(Error::Config(
                "tree ensembles need max_leaves >= 1 and shrinkage > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Additive ensemble: `base_score + shrinkage * sum(tree(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub width: usize,
    pub base_score: f64,
    pub shrinkage: f64,
    pub trees: Vec<RegressionTree>,
}

impl TreeEnsemble {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.base_score + self.shrinkage * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

/// Mean squared error of the model on the set's labels.
pub fn squared_loss(model: &TreeEnsemble, set: &LabeledSet) -> f64 {
    let n = set.len().max(1) as f64;
    set.instances()
        .map(|i| (i.label - model.score(&i.features)).powi(2))
        .sum::<f64>()
        / n
}

/// Stagewise least-squares boosting starting from the mean label.
pub fn fit_mart(set: &LabeledSet, cfg: &TreeConfig) -> Result<TreeEnsemble> {
    set.ensure_nonempty()?;
    let base = set.instances().map(|i| i.label).sum::<f64>() / set.len() as f64;
    let model = TreeEnsemble {
        width: set.width,
        base_score: base,
        shrinkage: cfg.shrinkage,
        trees: Vec::new(),
    };
    continue_mart(model, set, cfg)
}

/// Adds `cfg.trees` stages fitted on `set` to an existing ensemble.
pub fn continue_mart(mut model: TreeEnsemble, set: &LabeledSet, cfg: &TreeConfig) -> Result<TreeEnsemble> {
    set.ensure_nonempty()?;
    cfg.check()?;
    if model.width != set.width {
        return Err(Error::Training(format!(
            "ensemble width {} does not match data width {}",
            model.width, set.width
        )));
    }
    let rows: Vec<&[f64]> = set.instances().map(|i| i.features.as_slice()).collect();
    let labels: Vec<f64> = set.instances().map(|i| i.label).collect();
    let mut current: Vec<f64> = rows.iter().map(|r| model.score(r)).collect();
    for _ in 0..cfg.trees {
        let residuals: Vec<f64> = labels.iter().zip(&current).map(|(y, f)| y - f).collect();
        let (tree, _) = RegressionTree::fit(&rows, &residuals, cfg.max_leaves, cfg.min_samples_per_leaf);
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
    fn zero_stages_is_mean() {
        let s = set(vec![group(&[(vec![0.0], 1.0), (vec![1.0], 0.0), (vec![2.0], 0.0), (vec![3.0], 0.0)])]);
        let cfg = TreeConfig { trees: 0, ..TreeConfig::default() };
        let m = fit_mart(&s, &cfg).unwrap();
        assert_eq!(m.score(&[7.0]), 0.25);
    }

    #[test]
    fn single_instance_exact() {
        let s = set(vec![group(&[(vec![0.5], 1.0)])]);
        let cfg = TreeConfig { trees: 1, ..TreeConfig::default() };
        assert_eq!(fit_mart(&s, &cfg).unwrap().score(&[0.5]), 1.0);
    }

    #[test]
    fn empty_set_errors() {
        let s = set(vec![]);
        assert!(fit_mart(&s, &TreeConfig::default()).is_err());
    }

    #[test]
    fn learns_sign_of_feature() {
        let rows: Vec<(Vec<f64>, f64)> = (0..200)
            .map(|i| {
                let x = (i as f64 - 99.5) / 50.0;
                (vec![x], if x > 0.0 { 1.0 } else { 0.0 })
            })
            .collect();
        let s = set(vec![group(&rows)]);
        let m = fit_mart(&s, &TreeConfig::default()).unwrap();
        assert!(m.score(&[1.0]) > m.score(&[-1.0]));
    }

    #[test]
    fn training_loss_non_increasing() {
        let data = separable(20, 10, 9);
        let mut model = fit_mart(&data, &TreeConfig { trees: 0, ..TreeConfig::default() }).unwrap();
        let mut prev = squared_loss(&model, &data);
        for _ in 0..30 {
            model = continue_mart(model, &data, &TreeConfig { trees: 1, ..TreeConfig::default() }).unwrap();
            let loss = squared_loss(&model, &data);
            assert!(loss <= prev + 1e-12, "{loss} > {prev}");
            prev = loss;
        }
    }
}
