//! Supervised learning-to-rank prioritizers.
//!
//! All rankers are trained once on the grouped training instances (one group
//! per CI cycle) and then score unseen cycles from features alone.

mod coordinate_ascent;
mod deeporder;
mod lambdamart;
mod mart;
mod rankboost;
mod ranknet;
pub mod tree;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use coordinate_ascent::{continue_coordinate_ascent, fit_coordinate_ascent, multiplicative_grid, CoordinateAscentConfig, LinearScorer};
pub use deeporder::{continue_deeporder, deeporder_batch_loss_and_grad, fit_deeporder, DeepOrderConfig};
pub use lambdamart::{continue_lambdamart, fit_lambdamart, lambda_gradients, LambdaMartConfig};
pub use mart::{continue_mart, fit_mart, squared_loss, TreeConfig, TreeEnsemble};
pub use rankboost::{
    clamped_alpha, continue_rankboost, fit_rankboost, BoostedThresholds, RankBoostConfig, ThresholdRanker,
};
pub use ranknet::{continue_ranknet, fit_ranknet, pair_loss_and_grad, NetworkScorer, RankNetConfig};

use crate::domain::{Cycle, RankedSequence};
use crate::error::{Error, Result};
use crate::features::CycleFeatures;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: Vec<f64>,
    pub label: f64,
    /// Failing test (minority class).
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub cycle_id: u64,
    pub instances: Vec<Instance>,
}

/// Training instances grouped by cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub width: usize,
    pub groups: Vec<Group>,
}

/// Source of relevance labels.
#[derive(Debug, Clone, Copy)]
pub enum Labels<'a> {
    /// 1 for failing, 0 for passing.
    Verdict,
    /// Per-cycle, per-record heuristic priorities aligned with the given cycles.
    Heuristic(&'a [Vec<f64>]),
}

impl LabeledSet {
    pub fn from_cycles(cycles: &[Cycle], features: &[CycleFeatures], labels: Labels<'_>) -> Result<Self> {
        if cycles.len() != features.len() {
            return Err(Error::InvalidData(format!(
                "{} cycles but {} feature blocks",
                cycles.len(),
                features.len()
            )));
        }
        let width = features.first().map_or(0, |f| f.width);
        let mut groups = Vec::with_capacity(cycles.len());
        for (ci, (cycle, feats)) in cycles.iter().zip(features).enumerate() {
            if feats.len() != cycle.len() || feats.width != width {
                return Err(Error::InvalidData(format!(
                    "feature block of cycle {} does not match its records",
                    cycle.cycle_id
                )));
            }
            let instances = cycle
                .records
                .iter()
                .enumerate()
                .map(|(i, rec)| {
                    let label = match labels {
                        Labels::Verdict => rec.verdict.as_f64(),
                        Labels::Heuristic(h) => h[ci][i],
                    };
                    Instance {
                        features: feats.row(i).to_vec(),
                        label,
                        positive: rec.verdict.is_fail(),
                    }
                })
                .collect();
            groups.push(Group {
                cycle_id: cycle.cycle_id,
                instances,
            });
        }
        Ok(Self { width, groups })
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.instances.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.groups.iter().flat_map(|g| &g.instances)
    }

    pub fn positive_count(&self) -> usize {
        self.instances().filter(|i| i.positive).count()
    }

    /// Index of the first instance of each group in `instances()` order.
    pub(crate) fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.groups
            .iter()
            .map(|g| {
                let o = acc;
                acc += g.instances.len();
                o
            })
            .collect()
    }

    pub(crate) fn ensure_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Training("empty training set".into()));
        }
        if self.instances().any(|i| !i.label.is_finite() || i.features.len() != self.width) {
            return Err(Error::Training("training set has malformed instances".into()));
        }
        Ok(())
    }
}

/// A within-cycle ordered pair: `better` has the strictly larger label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub group: usize,
    pub better: usize,
    pub worse: usize,
}

#[derive(Debug, Clone)]
pub struct PairSet<'a> {
    pub set: &'a LabeledSet,
    pub pairs: Vec<Pair>,
}

impl PairSet<'_> {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn better(&self, p: &Pair) -> &Instance {
        &self.set.groups[p.group].instances[p.better]
    }

    pub fn worse(&self, p: &Pair) -> &Instance {
        &self.set.groups[p.group].instances[p.worse]
    }
}

/// Every within-cycle pair whose labels differ, higher label first.
pub fn make_pairs(set: &LabeledSet) -> PairSet<'_> {
    let mut pairs = Vec::new();
    for (g, group) in set.groups.iter().enumerate() {
        for (i, a) in group.instances.iter().enumerate() {
            for (j, b) in group.instances.iter().enumerate() {
                if a.label > b.label {
                    pairs.push(Pair {
                        group: g,
                        better: i,
                        worse: j,
                    });
                }
            }
        }
    }
    PairSet { set, pairs }
}

/// Trained state of a supervised ranker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum RankerModel {
    TreeEnsemble(TreeEnsemble),
    BoostedThresholds(BoostedThresholds),
    Network(NetworkScorer),
    LinearWeights(LinearScorer),
}

impl RankerModel {
    pub fn input_width(&self) -> usize {
        match self {
            RankerModel::TreeEnsemble(m) => m.width,
            RankerModel::BoostedThresholds(m) => m.width,
            RankerModel::Network(m) => m.standardizer.width(),
            RankerModel::LinearWeights(m) => m.weights.len(),
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        match self {
            RankerModel::TreeEnsemble(m) => m.score(x),
            RankerModel::BoostedThresholds(m) => m.score(x),
            RankerModel::Network(m) => m.score(x),
            RankerModel::LinearWeights(m) => m.score(x),
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            RankerModel::TreeEnsemble(_) => "TreeEnsemble",
            RankerModel::BoostedThresholds(_) => "BoostedThresholds",
            RankerModel::Network(_) => "NetworkParams",
            RankerModel::LinearWeights(_) => "LinearWeights",
        }
    }
}

/// Scores one cycle from its features only; order is descending score with
/// ties kept in input order.
pub fn score_cycle(model: &RankerModel, features: &CycleFeatures) -> Result<RankedSequence> {
    if !features.is_empty() && features.width != model.input_width() {
        return Err(Error::InvalidData(format!(
            "feature width {} does not match model width {}",
            features.width,
            model.input_width()
        )));
    }
    let scores: Vec<f64> = features.rows().map(|r| model.score(r)).collect();
    if let Some(bad) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Training(format!("non-finite score for test {bad}")));
    }
    Ok(RankedSequence::from_scores(scores))
}

/// Hyperparameters of every supervised ranker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SLConfig {
    pub seed: u64,
    pub mart: TreeConfig,
    pub lambdamart: LambdaMartConfig,
    pub rankboost: RankBoostConfig,
    pub ranknet: RankNetConfig,
    pub coordinate_ascent: CoordinateAscentConfig,
    pub deeporder: DeepOrderConfig,
}

impl Default for SLConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            mart: TreeConfig::default(),
            lambdamart: LambdaMartConfig::default(),
            rankboost: RankBoostConfig::default(),
            ranknet: RankNetConfig::default(),
            coordinate_ascent: CoordinateAscentConfig::default(),
            deeporder: DeepOrderConfig::default(),
        }
    }
}

/// Self-describing model file: technique, configuration echo, parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub technique: String,
    pub config: SLConfig,
    pub model: RankerModel,
}

impl SavedModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
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
    use super::test_support::*;
    use super::*;

    #[test]
    fn pairs_cross_product() {
        let s = set(vec![group(&[(vec![0.0], 1.0), (vec![0.0], 0.0), (vec![0.0], 0.0)])]);
        assert_eq!(make_pairs(&s).len(), 2);
        let tied = set(vec![group(&[(vec![0.0], 1.0), (vec![1.0], 1.0)])]);
        assert!(make_pairs(&tied).is_empty());
    }

    #[test]
    fn pairs_stay_within_cycles() {
        let s = set(vec![
            group(&[(vec![0.0], 1.0), (vec![1.0], 0.0)]),
            group(&[(vec![2.0], 1.0), (vec![3.0], 0.0)]),
        ]);
        let ps = make_pairs(&s);
        assert_eq!(ps.len(), 2);
        // Enumerate all cross-group combinations and confirm none appear.
        for p in &ps.pairs {
            assert_eq!(ps.better(p).label, 1.0);
            assert_eq!(ps.worse(p).label, 0.0);
        }
        assert_eq!(ps.pairs[0].group, 0);
        assert_eq!(ps.pairs[1].group, 1);
    }

    #[test]
    fn pair_count_over_label_strata() {
        let s = set(vec![group(&[
            (vec![0.0], 2.0),
            (vec![0.0], 1.0),
            (vec![0.0], 1.0),
            (vec![0.0], 0.0),
        ])]);
        // 1*3 above label 1 stratum boundary + 2*1 between labels 1 and 0.
        assert_eq!(make_pairs(&s).len(), 5);
    }

    #[test]
    fn constant_model_keeps_input_order() {
        let model = RankerModel::LinearWeights(LinearScorer::constant(2));
        let feats = CycleFeatures::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert_eq!(score_cycle(&model, &feats).unwrap().order, vec![0, 1, 2]);
    }

    #[test]
    fn width_mismatch_errors() {
        let model = RankerModel::LinearWeights(LinearScorer::constant(3));
        let feats = CycleFeatures::from_rows(&[vec![1.0, 2.0]]);
        assert!(score_cycle(&model, &feats).is_err());
    }

    #[test]
    fn saved_model_round_trip_is_score_identical() {
        let data = separable(10, 10, 4);
        let model = RankerModel::TreeEnsemble(fit_mart(&data, &TreeConfig::default()).unwrap());
        let saved = SavedModel {
            technique: "MART".into(),
            config: SLConfig::default(),
            model,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        saved.save(&path).unwrap();
        let back = SavedModel::load(&path).unwrap();
        assert_eq!(back, saved);
        for inst in data.instances() {
            assert_eq!(
                back.model.score(&inst.features).to_bits(),
                saved.model.score(&inst.features).to_bits()
            );
        }
    }
}
