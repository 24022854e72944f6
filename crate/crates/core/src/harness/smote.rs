use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rank_sl::{Instance, LabeledSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Failing fraction of the augmented set.
    pub ratio: f64,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            ratio: 0.5,
            seed: 1,
        }
    }
}

impl SmoteConfig {
    pub fn check(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::Config("smote.k_neighbors must be at least 1".into()));
        }
        // A ratio of exactly 1 would need infinitely many synthetics.
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Config(format!("smote.ratio {} must lie in (0, 1)", self.ratio)));
        }
        Ok(())
    }
}

/// `x + delta * (nn - x)`.
pub fn interpolate(x: &[f64], nn: &[f64], delta: f64) -> Vec<f64> {
    x.iter().zip(nn).map(|(a, b)| a + delta * (b - a)).collect()
}

/// Synthetics needed so that `(m + n) / (total + n)` is as close to `ratio`
/// as whole instances allow.
pub fn synthetic_count(total: usize, minority: usize, ratio: f64) -> usize {
    let need = (ratio * total as f64 - minority as f64) / (1.0 - ratio);
    if need <= 0.0 {
        0
    } else {
        need.round() as usize
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Oversamples failing instances. Sources are taken round-robin over the
/// minority; each synthetic joins its source's cycle group and gets the
/// interpolated label. Originals are kept unchanged and first in each group.
pub fn smote_augment(train: &LabeledSet, cfg: &SmoteConfig) -> Result<LabeledSet> {
    cfg.check()?;
    let minority: Vec<(usize, usize)> = train
        .groups
        .iter()
        .enumerate()
        .flat_map(|(g, grp)| {
            grp.instances
                .iter()
                .enumerate()
                .filter(|(_, i)| i.positive)
                .map(move |(i, _)| (g, i))
        })
        .collect();
    let m = minority.len();
    if m < 2 {
        return Err(Error::Training(format!(
            "SMOTE needs at least 2 failing training instances, found {m}"
        )));
    }
    let k = cfg.k_neighbors.min(m - 1);
    let at = |(g, i): (usize, usize)| -> &Instance { &train.groups[g].instances[i] };

    let n_syn = synthetic_count(train.len(), m, cfg.ratio);
    let mut out = train.clone();
    if n_syn == 0 {
        return Ok(out);
    }
    let mut neighbors: Vec<Option<Vec<usize>>> = vec![None; m];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for s in 0..n_syn {
        let src = s % m;
        let nn = neighbors[src].get_or_insert_with(|| {
            let x = &at(minority[src]).features;
            let mut others: Vec<(f64, usize)> = (0..m)
                .filter(|&j| j != src)
                .map(|j| (sq_dist(x, &at(minority[j]).features), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        });
        let pick = nn[rng.random_range(0..nn.len())];
        let delta: f64 = rng.random_range(0.0..=1.0);
        let a = at(minority[src]);
        let b = at(minority[pick]);
        let synthetic = Instance {
            features: interpolate(&a.features, &b.features, delta),
            label: a.label + delta * (b.label - a.label),
            positive: true,
        };
        out.groups[minority[src].0].instances.push(synthetic);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank_sl::Group;

    fn set(rows: &[(f64, bool)]) -> LabeledSet {
        LabeledSet {
            width: 1,
            groups: vec![Group {
                cycle_id: 0,
                instances: rows
                    .iter()
                    .map(|&(x, p)| Instance {
                        features: vec![x],
                        label: if p { 1.0 } else { 0.0 },
                        positive: p,
                    })
                    .collect(),
            }],
        }
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        assert_eq!(interpolate(&[1.0, 2.0], &[3.0, 6.0], 0.0), vec![1.0, 2.0]);
        assert_eq!(interpolate(&[1.0, 2.0], &[3.0, 6.0], 0.5), vec![2.0, 4.0]);
        assert_eq!(interpolate(&[1.0, 2.0], &[3.0, 6.0], 1.0), vec![3.0, 6.0]);
    }

    #[test]
    fn two_minority_points_stay_on_the_segment() {
        let mut rows = vec![(0.0, true), (2.0, true)];
        rows.extend((0..20).map(|i| (10.0 + i as f64, false)));
        let cfg = SmoteConfig { k_neighbors: 1, ..SmoteConfig::default() };
        let out = smote_augment(&set(&rows), &cfg).unwrap();
        for i in out.groups[0].instances.iter().skip(rows.len()) {
            assert!(i.positive && (0.0..=2.0).contains(&i.features[0]));
        }
    }

    #[test]
    fn count_audit_one_percent() {
        let mut rows: Vec<(f64, bool)> = (0..990).map(|i| (i as f64, false)).collect();
        rows.extend((0..10).map(|i| (-(i as f64), true)));
        let out = smote_augment(&set(&rows), &SmoteConfig::default()).unwrap();
        let total = out.len() as f64;
        let pos = out.positive_count() as f64;
        assert!((pos / total - 0.5).abs() <= 1.0 / total);
        // Originals untouched and first.
        assert_eq!(&out.groups[0].instances[..1000], &set(&rows).groups[0].instances[..]);
    }

    #[test]
    fn fewer_than_two_failures_errors() {
        let rows = vec![(0.0, true), (1.0, false), (2.0, false)];
        assert!(smote_augment(&set(&rows), &SmoteConfig::default()).is_err());
    }

    #[test]
    fn already_balanced_is_unchanged() {
        let rows = vec![(0.0, true), (1.0, true), (2.0, false)];
        let s = set(&rows);
        assert_eq!(smote_augment(&s, &SmoteConfig::default()).unwrap(), s);
    }

    #[test]
    fn ratio_one_is_rejected() {
        let cfg = SmoteConfig { ratio: 1.0, ..SmoteConfig::default() };
        assert!(cfg.check().is_err());
    }
}
