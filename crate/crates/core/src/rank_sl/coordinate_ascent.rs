use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledSet;
use crate::error::{Error, Result};
use crate::metrics::rapfd_from_failing_ranks;
use crate::nn::Standardizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoordinateAscentConfig {
    pub restarts: usize,
    pub sweeps: usize,
}

impl Default for CoordinateAscentConfig {
    fn default() -> Self {
        Self { restarts: 5, sweeps: 25 }
    }
}

/// `w . z(x)` over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    pub standardizer: Standardizer,
    pub weights: Vec<f64>,
}

impl LinearScorer {
    /// All-zero weights: every test ties.
    pub fn constant(width: usize) -> Self {
        Self {
            standardizer: Standardizer::identity(width),
            weights: vec![0.0; width],
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.standardizer
            .transform(x)
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| a * w)
            .sum()
    }
}

/// `{0} ∪ {±2^e : e = -5..=4}`, ascending.
pub fn multiplicative_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (-5..=4).map(|e| 2f64.powi(e)).collect();
    g.extend((-5..=4).map(|e| -(2f64.powi(e))));
    g.push(0.0);
    g.sort_by(f64::total_cmp);
    g
}

struct Objective {
    /// Standardized rows per group (groups with at least one failure only).
    groups: Vec<(Vec<Vec<f64>>, Vec<bool>)>,
}

impl Objective {
    fn mean_rapfd(&self, scores: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        let mut order = Vec::new();
        for ((_, fails), s) in self.groups.iter().zip(scores) {
            order.clear();
            order.extend(0..s.len());
            order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
            let ranks = order.iter().enumerate().filter(|(_, &i)| fails[i]).map(|(p, _)| p + 1);
            total += rapfd_from_failing_ranks(ranks, s.len()).unwrap_or(0.0);
        }
        total / self.groups.len() as f64
    }

    fn scores(&self, w: &[f64]) -> Vec<Vec<f64>> {
        self.groups
            .iter()
            .map(|(rows, _)| rows.iter().map(|r| r.iter().zip(w).map(|(a, b)| a * b).sum()).collect())
            .collect()
    }
}

/// Listwise coordinate ascent on mean training rAPFD. A grid value replaces
/// the incumbent weight only when strictly better. Restart 0 starts from
/// uniform weights, later restarts from seeded random ones.
pub fn fit_coordinate_ascent(set: &LabeledSet, cfg: &CoordinateAscentConfig, seed: u64) -> Result<LinearScorer> {
    set.ensure_nonempty()?;
    let standardizer = Standardizer::fit(set.instances().map(|i| i.features.as_slice()), set.width);
    ascend(set, standardizer, vec![1.0; set.width], cfg, seed)
}

/// Continues from `model`: its weights seed restart 0 and its standardizer
/// is kept so the weights keep their meaning.
pub fn continue_coordinate_ascent(
    model: LinearScorer,
    set: &LabeledSet,
    cfg: &CoordinateAscentConfig,
    seed: u64,
) -> Result<LinearScorer> {
    set.ensure_nonempty()?;
    if model.weights.len() != set.width {
        return Err(Error::Training("coordinate ascent width mismatch".into()));
    }
    ascend(set, model.standardizer, model.weights, cfg, seed)
}

fn ascend(
    set: &LabeledSet,
    standardizer: Standardizer,
    initial: Vec<f64>,
    cfg: &CoordinateAscentConfig,
    seed: u64,
) -> Result<LinearScorer> {
    if cfg.restarts == 0 {
        return Err(Error::Config("coordinate ascent needs restarts >= 1".into()));
    }
    let obj = Objective {
        groups: set
            .groups
            .iter()
            .filter(|g| g.instances.iter().any(|i| i.positive))
            .map(|g| {
                (
                    g.instances.iter().map(|i| standardizer.transform(&i.features)).collect(),
                    g.instances.iter().map(|i| i.positive).collect(),
                )
            })
            .collect(),
    };
    if obj.groups.is_empty() {
        return Err(Error::Training("coordinate ascent needs a training cycle with a failing test".into()));
    }
    let grid = multiplicative_grid();
    let width = set.width;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for restart in 0..cfg.restarts {
        let mut w: Vec<f64> = if restart == 0 {
            initial.clone()
        } else {
            (0..width).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let mut scores = obj.scores(&w);
        let mut current = obj.mean_rapfd(&scores);
        for _ in 0..cfg.sweeps {
            let mut changed = false;
            for j in 0..width {
                let incumbent = w[j];
                let mut pick = incumbent;
                for &g in &grid {
                    if g == incumbent {
                        continue;
                    }
                    let delta = g - incumbent;
                    let trial: Vec<Vec<f64>> = scores
                        .iter()
                        .zip(&obj.groups)
                        .map(|(s, (rows, _))| s.iter().zip(rows).map(|(v, r)| v + delta * r[j]).collect())
                        .collect();
                    let value = obj.mean_rapfd(&trial);
                    if value > current + 1e-12 {
                        current = value;
                        pick = g;
                    }
                }
                if pick != incumbent {
                    w[j] = pick;
                    // Recompute rather than accumulate to avoid drift.
                    scores = obj.scores(&w);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if best.as_ref().is_none_or(|(b, _)| current > *b + 1e-12) {
            best = Some((current, w));
        }
    }
    let (_, weights) = best.expect("at least one restart");
    Ok(LinearScorer { standardizer, weights })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use crate::domain::RankedSequence;

    fn training_rapfd(m: &LinearScorer, s: &LabeledSet) -> f64 {
        let obj: Vec<f64> = s
            .groups
            .iter()
            .filter(|g| g.instances.iter().any(|i| i.positive))
            .map(|g| {
                let seq = RankedSequence::from_scores(g.instances.iter().map(|i| m.score(&i.features)).collect());
                let ranks = seq.ranks();
                rapfd_from_failing_ranks(
                    g.instances.iter().enumerate().filter(|(_, i)| i.positive).map(|(k, _)| ranks[k]),
                    g.instances.len(),
                )
                .unwrap()
            })
            .collect();
        obj.iter().sum::<f64>() / obj.len() as f64
    }

    #[test]
    fn grid_has_21_points() {
        let g = multiplicative_grid();
        assert_eq!(g.len(), 21);
        assert!(g.contains(&0.0) && g.contains(&16.0) && g.contains(&-0.03125));
    }

    #[test]
    fn verdict_feature_gets_positive_weight() {
        let s = set(vec![
            group(&[(vec![1.0], 1.0), (vec![0.0], 0.0), (vec![0.0], 0.0)]),
            group(&[(vec![0.0], 0.0), (vec![1.0], 1.0)]),
        ]);
        let m = fit_coordinate_ascent(&s, &CoordinateAscentConfig::default(), 1).unwrap();
        assert!(m.weights[0] > 0.0);
        assert_eq!(training_rapfd(&m, &s), 1.0);
    }

    #[test]
    fn constant_coordinate_is_untouched() {
        // Feature 1 is constant, so it standardizes to 0 and never changes rAPFD.
        let s = set(vec![group(&[(vec![1.0, 3.0], 1.0), (vec![0.0, 3.0], 0.0)])]);
        let m = fit_coordinate_ascent(&s, &CoordinateAscentConfig { restarts: 1, sweeps: 5 }, 1).unwrap();
        assert_eq!(m.weights[1], 1.0);
    }

    #[test]
    fn no_failing_cycle_errors() {
        let s = set(vec![group(&[(vec![1.0], 0.0), (vec![0.0], 0.0)])]);
        assert!(fit_coordinate_ascent(&s, &CoordinateAscentConfig::default(), 1).is_err());
    }

    #[test]
    fn feature_rescale_keeps_ordering() {
        let data = separable(10, 8, 12);
        let mut scaled = data.clone();
        for g in &mut scaled.groups {
            for i in &mut g.instances {
                i.features.iter_mut().for_each(|v| *v *= 10.0);
            }
        }
        let cfg = CoordinateAscentConfig::default();
        let a = fit_coordinate_ascent(&data, &cfg, 4).unwrap();
        let b = fit_coordinate_ascent(&scaled, &cfg, 4).unwrap();
        for (ga, gb) in data.groups.iter().zip(&scaled.groups) {
            let oa = RankedSequence::from_scores(ga.instances.iter().map(|i| a.score(&i.features)).collect());
            let ob = RankedSequence::from_scores(gb.instances.iter().map(|i| b.score(&i.features)).collect());
            assert_eq!(oa.order, ob.order);
        }
    }
}
