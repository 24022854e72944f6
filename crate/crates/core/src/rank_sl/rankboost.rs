use serde::{Deserialize, Serialize};

use super::{LabeledSet, PairSet};
use crate::error::{Error, Result};

/// Bound on |r| keeping the weak-ranker weight finite.
const R_CLAMP: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RankBoostConfig {
    pub rounds: usize,
    pub thresholds_per_feature: usize,
}

impl Default for RankBoostConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            thresholds_per_feature: 10,
        }
    }
}

/// `h(x) = 1` when `x[feature] > threshold` (or `<=` when `inverted`), else 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRanker {
    pub feature: usize,
    pub threshold: f64,
    pub inverted: bool,
    pub alpha: f64,
}

impl ThresholdRanker {
    pub fn fires(&self, x: &[f64]) -> bool {
        (x[self.feature] > self.threshold) != self.inverted
    }

    fn h(&self, x: &[f64]) -> f64 {
        if self.fires(x) {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedThresholds {
    pub width: usize,
    pub rankers: Vec<ThresholdRanker>,
}

impl BoostedThresholds {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.rankers.iter().map(|r| r.alpha * r.h(x)).sum()
    }
}

/// `alpha = 0.5 ln((1 + r) / (1 - r))` with `r` clamped to `±(1 - 1e-6)`.
pub fn clamped_alpha(r: f64) -> f64 {
    let r = r.clamp(-R_CLAMP, R_CLAMP);
    0.5 * ((1.0 + r) / (1.0 - r)).ln()
}

/// Candidate thresholds per feature: evenly spaced quantiles of the
/// observed distinct values.
fn candidate_thresholds(set: &LabeledSet, per_feature: usize) -> Vec<Vec<f64>> {
    (0..set.width)
        .map(|f| {
            let mut vals: Vec<f64> = set.instances().map(|i| i.features[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            if vals.len() <= 1 {
                return Vec::new();
            }
            // Thresholds between distinct values; the largest value never splits.
            let cuts = vals.len() - 1;
            let take = per_feature.max(1).min(cuts);
            let mut out: Vec<f64> = (0..take)
                .map(|t| {
                    let k = ((t as f64 + 0.5) * cuts as f64 / take as f64) as usize;
                    let k = k.min(cuts - 1);
                    vals[k] + (vals[k + 1] - vals[k]) / 2.0
                })
                .collect();
            out.dedup();
            out
        })
        .collect()
}

pub(crate) struct RoundOutcome {
    pub ranker: ThresholdRanker,
    pub r: f64,
}

/// Picks the weak ranker maximizing `r = sum D(p) (h(x+) - h(x-))`, using
/// per-instance potentials `pi(x) = sum_{x = x+} D - sum_{x = x-} D`.
pub(crate) fn best_weak_ranker(
    pairs: &PairSet<'_>,
    offsets: &[usize],
    dist: &[f64],
    thresholds: &[Vec<f64>],
    rows: &[&[f64]],
) -> Option<RoundOutcome> {
    let mut potential = vec![0.0; rows.len()];
    for (p, &d) in pairs.pairs.iter().zip(dist) {
        potential[offsets[p.group] + p.better] += d;
        potential[offsets[p.group] + p.worse] -= d;
    }
    let mut best: Option<RoundOutcome> = None;
    for (f, cuts) in thresholds.iter().enumerate() {
        for &theta in cuts {
            let above: f64 = rows
                .iter()
                .zip(&potential)
                .filter(|(x, _)| x[f] > theta)
                .map(|(_, p)| p)
                .sum();
            // Potentials sum to zero, so the inverted ranker scores -above.
            for (inverted, r) in [(false, above), (true, -above)] {
                if best.as_ref().is_none_or(|b| r > b.r + 1e-15) {
                    best = Some(RoundOutcome {
                        ranker: ThresholdRanker {
                            feature: f,
                            threshold: theta,
                            inverted,
                            alpha: 0.0,
                        },
                        r,
                    });
                }
            }
        }
    }
    best
}

/// `D <- D * exp(alpha (h(x-) - h(x+)))`, renormalized to sum 1.
pub(crate) fn reweight(pairs: &PairSet<'_>, dist: &mut [f64], ranker: &ThresholdRanker) {
    for (p, d) in pairs.pairs.iter().zip(dist.iter_mut()) {
        let margin = ranker.h(&pairs.worse(p).features) - ranker.h(&pairs.better(p).features);
        *d *= (ranker.alpha * margin).exp();
    }
    let total: f64 = dist.iter().sum();
    if total > 0.0 {
        dist.iter_mut().for_each(|d| *d /= total);
    }
}

pub fn fit_rankboost(pairs: &PairSet<'_>, cfg: &RankBoostConfig) -> Result<BoostedThresholds> {
    let model = BoostedThresholds {
        width: pairs.set.width,
        rankers: Vec::new(),
    };
    continue_rankboost(model, pairs, cfg)
}

/// Continues boosting; the initial pair distribution is the one the
/// existing rankers would have produced, `D ∝ exp(F(x-) - F(x+))`.
pub fn continue_rankboost(
    mut model: BoostedThresholds,
    pairs: &PairSet<'_>,
    cfg: &RankBoostConfig,
) -> Result<BoostedThresholds> {
    if pairs.is_empty() {
        return Err(Error::Training("RankBoost needs at least one ordered pair".into()));
    }
    if model.width != pairs.set.width {
        return Err(Error::Training("RankBoost width mismatch".into()));
    }
    let rows: Vec<&[f64]> = pairs.set.instances().map(|i| i.features.as_slice()).collect();
    let offsets = pairs.set.offsets();
    let thresholds = candidate_thresholds(pairs.set, cfg.thresholds_per_feature);
    let logits: Vec<f64> = pairs
        .pairs
        .iter()
        .map(|p| model.score(&pairs.worse(p).features) - model.score(&pairs.better(p).features))
        .collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut dist: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = dist.iter().sum();
    dist.iter_mut().for_each(|d| *d /= total);

    for _ in 0..cfg.rounds {
        let Some(outcome) = best_weak_ranker(pairs, &offsets, &dist, &thresholds, &rows) else {
            break;
        };
        let mut ranker = outcome.ranker;
        ranker.alpha = clamped_alpha(outcome.r);
        if ranker.alpha == 0.0 {
            break;
        }
        reweight(pairs, &mut dist, &ranker);
        model.rankers.push(ranker);
    }
    Ok(model)
}
