use std::collections::HashMap;
use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::smote::smote_augment;
use super::technique::{Technique, TechniqueKind};
use crate::domain::{classify_subject, optimal_sequence, Cycle, RankedSequence, Subject, SubjectClass};
use crate::error::{Error, Result};
use crate::features::{build_features, heuristic_priority, CycleFeatures, FeatureFamily, FeatureMatrix};
use crate::ingest::{split_train_test, TrainTestSplit};
use crate::metrics::cycle_metrics;
use crate::rank_rl::{
    mix_seed, online_cycle_update, Agent, FrrmabAgent, PgAgent, RetecsAgent, RlAgent,
};
use crate::rank_sl::{
    continue_coordinate_ascent, continue_deeporder, continue_lambdamart, continue_mart, continue_rankboost,
    continue_ranknet, fit_coordinate_ascent, fit_deeporder, fit_lambdamart, fit_mart, fit_rankboost, fit_ranknet,
    make_pairs, score_cycle, LabeledSet, Labels, RankerModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Baseline,
    Smote,
    EarlyStop,
    /// From-scratch counterpart of a pretrained run.
    Scratch,
    Pretrain,
}

impl Protocol {
    pub fn label(self) -> &'static str {
        match self {
            Protocol::Baseline => "baseline",
            Protocol::Smote => "smote",
            Protocol::EarlyStop => "early-stop",
            Protocol::Scratch => "scratch",
            Protocol::Pretrain => "pretrain",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One evaluated test cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRow {
    pub subject: String,
    pub technique: String,
    pub protocol: String,
    pub cycle_id: u64,
    pub n_tests: usize,
    pub n_failing: usize,
    pub apfd: Option<f64>,
    pub rapfd: Option<f64>,
    pub nrpa: f64,
    pub first_fail_time: Option<f64>,
    pub total_time: f64,
    pub prediction_time_s: f64,
    pub training_time_s: f64,
    /// Record indices, first scheduled first, joined by `;`.
    pub order: String,
}

/// Every test-cycle row of one (subject, technique, protocol) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub subject: String,
    pub class: SubjectClass,
    pub technique: String,
    pub protocol: String,
    pub avg_commit_interval_s: f64,
    /// Mean over model fits (supervised) or over test-cycle updates (online).
    pub mean_training_time_s: f64,
    pub rows: Vec<CycleRow>,
}

/// A subject with its split and the feature blocks the configured
/// techniques need.
#[derive(Debug, Clone)]
pub struct PreparedSubject {
    pub subject: Subject,
    pub split: TrainTestSplit,
    pub class: SubjectClass,
    features: HashMap<FeatureFamily, FeatureMatrix>,
    heuristic: Option<Vec<Vec<f64>>>,
}

impl PreparedSubject {
    pub fn prepare(subject: Subject, cfg: &ExperimentConfig, techniques: &[Technique]) -> Result<Self> {
        let violations = subject.validate();
        if let Some(v) = violations.first() {
            return Err(Error::InvalidData(format!(
                "subject {:?} has {} violation(s), first: {v}",
                subject.name,
                violations.len()
            )));
        }
        let split = split_train_test(&subject, cfg.train_record_target)?;
        let mut features = HashMap::new();
        for t in techniques {
            let fam = t.family();
            if let std::collections::hash_map::Entry::Vacant(e) = features.entry(fam) {
                e.insert(build_features(&subject, &cfg.features.schema(fam))?);
            }
        }
        let heuristic = if techniques.contains(&Technique::DeepOrder) {
            Some(heuristic_priority(&subject, &cfg.heuristic)?)
        } else {
            None
        };
        Ok(Self {
            class: classify_subject(&subject),
            subject,
            split,
            features,
            heuristic,
        })
    }

    pub fn name(&self) -> &str {
        &self.subject.name
    }

    pub fn features(&self, family: FeatureFamily) -> Result<&[CycleFeatures]> {
        self.features
            .get(&family)
            .map(|m| m.cycles.as_slice())
            .ok_or_else(|| Error::Config(format!("features for family {} were not prepared", family.label())))
    }

    fn heuristic(&self) -> Result<&[Vec<f64>]> {
        self.heuristic
            .as_deref()
            .ok_or_else(|| Error::Config("heuristic labels were not prepared".into()))
    }
}

fn join_order(seq: &RankedSequence) -> String {
    seq.order.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

fn make_row(ps: &PreparedSubject, t: &str, p: &str, cycle: &Cycle, seq: &RankedSequence, pred: f64, train: f64) -> Result<CycleRow> {
    let m = cycle_metrics(seq, cycle)?;
    Ok(CycleRow {
        subject: ps.name().to_string(),
        technique: t.to_string(),
        protocol: p.to_string(),
        cycle_id: cycle.cycle_id,
        n_tests: cycle.len(),
        n_failing: cycle.fail_count(),
        apfd: m.apfd,
        rapfd: m.rapfd,
        nrpa: m.nrpa,
        first_fail_time: m.first_fail_time,
        total_time: m.total_time,
        prediction_time_s: pred,
        training_time_s: train,
        order: join_order(seq),
    })
}

fn record(ps: &PreparedSubject, technique: Technique, protocol: Protocol, training: &[f64], rows: Vec<CycleRow>) -> RunRecord {
    let mean_training_time_s = if training.is_empty() {
        0.0
    } else {
        training.iter().sum::<f64>() / training.len() as f64
    };
    RunRecord {
        subject: ps.name().to_string(),
        class: ps.class,
        technique: technique.name().to_string(),
        protocol: protocol.label().to_string(),
        avg_commit_interval_s: ps.subject.avg_commit_interval(),
        mean_training_time_s,
        rows,
    }
}

/// Labeled set for a supervised technique over a run of cycles.
/// `heuristic` must be aligned with `cycles`.
pub fn labeled_set(
    technique: Technique,
    cycles: &[Cycle],
    features: &[CycleFeatures],
    heuristic: Option<&[Vec<f64>]>,
) -> Result<LabeledSet> {
    let labels = if technique == Technique::DeepOrder {
        Labels::Heuristic(heuristic.ok_or_else(|| Error::Config("DeepOrder needs heuristic labels".into()))?)
    } else {
        Labels::Verdict
    };
    LabeledSet::from_cycles(cycles, features, labels)
}

/// Fits a supervised technique from scratch.
pub fn fit_supervised(technique: Technique, set: &LabeledSet, cfg: &ExperimentConfig) -> Result<RankerModel> {
    let sl = &cfg.sl;
    Ok(match technique {
        Technique::Mart => RankerModel::TreeEnsemble(fit_mart(set, &sl.mart)?),
        Technique::LambdaMart => RankerModel::TreeEnsemble(fit_lambdamart(set, &sl.lambdamart)?),
        Technique::RankBoost => RankerModel::BoostedThresholds(fit_rankboost(&make_pairs(set), &sl.rankboost)?),
        Technique::RankNet => RankerModel::Network(fit_ranknet(&make_pairs(set), &sl.ranknet, sl.seed)?),
        Technique::CoordinateAscent => {
            RankerModel::LinearWeights(fit_coordinate_ascent(set, &sl.coordinate_ascent, sl.seed)?)
        }
        Technique::DeepOrder => RankerModel::Network(fit_deeporder(set, &sl.deeporder, sl.seed)?),
        other => return Err(Error::Unsupported(format!("{other} is not a supervised technique"))),
    })
}

/// Continues training a fitted model on more data.
pub fn continue_supervised(
    technique: Technique,
    model: RankerModel,
    set: &LabeledSet,
    cfg: &ExperimentConfig,
) -> Result<RankerModel> {
    let sl = &cfg.sl;
    let variant = model.variant_name();
    Ok(match (technique, model) {
        (Technique::Mart, RankerModel::TreeEnsemble(m)) => RankerModel::TreeEnsemble(continue_mart(m, set, &sl.mart)?),
        (Technique::LambdaMart, RankerModel::TreeEnsemble(m)) => {
            RankerModel::TreeEnsemble(continue_lambdamart(m, set, &sl.lambdamart)?)
        }
        (Technique::RankBoost, RankerModel::BoostedThresholds(m)) => {
            RankerModel::BoostedThresholds(continue_rankboost(m, &make_pairs(set), &sl.rankboost)?)
        }
        (Technique::RankNet, RankerModel::Network(m)) => {
            RankerModel::Network(continue_ranknet(m, &make_pairs(set), &sl.ranknet)?)
        }
        (Technique::CoordinateAscent, RankerModel::LinearWeights(m)) => {
            RankerModel::LinearWeights(continue_coordinate_ascent(m, set, &sl.coordinate_ascent, sl.seed)?)
        }
        (Technique::DeepOrder, RankerModel::Network(m)) => {
            RankerModel::Network(continue_deeporder(m, set, &sl.deeporder)?)
        }
        (t, _) => {
            return Err(Error::Unsupported(format!(
                "warm start of {t} from a {variant} model is not supported"
            )))
        }
    })
}

pub fn new_agent(technique: Technique, cfg: &ExperimentConfig) -> Result<RlAgent> {
    let rl = &cfg.rl;
    match technique {
        Technique::Coleman => Ok(RlAgent::Frrmab(FrrmabAgent::new(rl.frrmab.clone())?)),
        Technique::Retecs => Ok(RlAgent::Retecs(RetecsAgent::new(rl.retecs.clone(), rl.seed)?)),
        t => match t.formulation() {
            Some(f) => Ok(RlAgent::PolicyGradient(PgAgent::new(f, rl.policy.clone(), rl.seed)?)),
            None => Err(Error::Unsupported(format!("{t} is not an online technique"))),
        },
    }
}

fn builtin_sequence(technique: Technique, cycle: &Cycle, seed: u64) -> RankedSequence {
    match technique {
        Technique::Oracle => optimal_sequence(cycle),
        _ => {
            let mut order: Vec<usize> = (0..cycle.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, cycle.cycle_id, 0)));
            RankedSequence::from_order(order)
        }
    }
}

fn replay_builtin(ps: &PreparedSubject, technique: Technique, protocol: Protocol, seed: u64) -> Result<RunRecord> {
    let mut rows = Vec::new();
    for cycle in ps.split.test_cycles(&ps.subject) {
        let start = Instant::now();
        let seq = builtin_sequence(technique, cycle, seed);
        let pred = start.elapsed().as_secs_f64();
        rows.push(make_row(ps, technique.name(), protocol.label(), cycle, &seq, pred, 0.0)?);
    }
    Ok(record(ps, technique, protocol, &[], rows))
}

fn fit_on_prefix(
    ps: &PreparedSubject,
    technique: Technique,
    end: usize,
    smote: bool,
    cfg: &ExperimentConfig,
) -> Result<LabeledSet> {
    let feats = ps.features(technique.family())?;
    let heur = if technique == Technique::DeepOrder {
        Some(&ps.heuristic()?[..end])
    } else {
        None
    };
    let set = labeled_set(technique, &ps.subject.cycles[..end], &feats[..end], heur)?;
    if smote {
        smote_augment(&set, &cfg.smote)
    } else {
        Ok(set)
    }
}

/// Scores every test cycle with a supervised model, refitting on all
/// earlier cycles every `refit_every` test cycles when that is nonzero.
fn replay_supervised(
    ps: &PreparedSubject,
    technique: Technique,
    protocol: Protocol,
    initial: RankerModel,
    initial_fit_s: f64,
    smote: bool,
    cfg: &ExperimentConfig,
) -> Result<RunRecord> {
    let feats = ps.features(technique.family())?;
    let boundary = ps.split.boundary_cycle_index;
    let mut model = initial;
    let mut fits = vec![initial_fit_s];
    let mut pending_fit = initial_fit_s;
    let mut rows = Vec::new();
    for (j, cycle) in ps.split.test_cycles(&ps.subject).iter().enumerate() {
        let idx = boundary + j;
        if cfg.refit_every > 0 && j > 0 && j % cfg.refit_every == 0 {
            let start = Instant::now();
            let set = fit_on_prefix(ps, technique, idx, smote, cfg)?;
            model = fit_supervised(technique, &set, cfg)?;
            pending_fit = start.elapsed().as_secs_f64();
            fits.push(pending_fit);
        }
        let start = Instant::now();
        let seq = score_cycle(&model, &feats[idx])?;
        let pred = start.elapsed().as_secs_f64();
        rows.push(make_row(ps, technique.name(), protocol.label(), cycle, &seq, pred, pending_fit)?);
        pending_fit = 0.0;
    }
    Ok(record(ps, technique, protocol, &fits, rows))
}

/// Runs an agent through every cycle of `ps`; rows are kept for test
/// cycles. With `freeze_at_boundary` the agent stops learning once the
/// training prefix is consumed.
fn replay_online(
    ps: &PreparedSubject,
    technique: Technique,
    protocol: Protocol,
    agent: &mut RlAgent,
    freeze_at_boundary: bool,
) -> Result<RunRecord> {
    let feats = ps.features(technique.family())?;
    let boundary = ps.split.boundary_cycle_index;
    let mut rows = Vec::new();
    let mut training = Vec::new();
    for (i, cycle) in ps.subject.cycles.iter().enumerate() {
        if freeze_at_boundary && i == boundary {
            agent.set_frozen(true);
        }
        let step = online_cycle_update(agent, cycle, &feats[i])?;
        if ps.split.is_test_cycle(i) {
            training.push(step.training_time_s);
            rows.push(make_row(
                ps,
                technique.name(),
                protocol.label(),
                cycle,
                &step.sequence,
                step.prediction_time_s,
                step.training_time_s,
            )?);
        }
    }
    Ok(record(ps, technique, protocol, &training, rows))
}

/// Runs one technique under `Baseline`, `Smote` or `EarlyStop`.
///
/// SMOTE applies to supervised techniques and early stopping to online
/// ones; other combinations return `Unsupported`.
pub fn replay(ps: &PreparedSubject, technique: Technique, protocol: Protocol, cfg: &ExperimentConfig) -> Result<RunRecord> {
    match (technique.kind(), protocol) {
        (TechniqueKind::Builtin, Protocol::Baseline | Protocol::EarlyStop) => {
            replay_builtin(ps, technique, protocol, cfg.seed)
        }
        (TechniqueKind::Supervised, Protocol::Baseline | Protocol::Smote) => {
            let smote = protocol == Protocol::Smote;
            let start = Instant::now();
            let set = fit_on_prefix(ps, technique, ps.split.boundary_cycle_index, smote, cfg)?;
            let model = fit_supervised(technique, &set, cfg)?;
            let fit_s = start.elapsed().as_secs_f64();
            replay_supervised(ps, technique, protocol, model, fit_s, smote, cfg)
        }
        (TechniqueKind::Online, Protocol::Baseline | Protocol::EarlyStop) => {
            let mut agent = new_agent(technique, cfg)?;
            replay_online(ps, technique, protocol, &mut agent, protocol == Protocol::EarlyStop)
        }
        (_, p) => Err(Error::Unsupported(format!("{technique} does not run under the {p} protocol"))),
    }
}

/// Trains on all of `source`, continues on the target's training prefix and
/// evaluates on the target's test cycles. Returns `(scratch, pretrained)`.
pub fn pretrain_finetune(
    cfg: &ExperimentConfig,
    source: &PreparedSubject,
    target: &PreparedSubject,
    technique: Technique,
) -> Result<(RunRecord, RunRecord)> {
    if source.name() == target.name() {
        return Err(Error::Config("pretrain source and target must differ".into()));
    }
    let fam = technique.family();
    let (sw, tw) = (
        source.features(fam)?.first().map_or(0, |f| f.width),
        target.features(fam)?.first().map_or(0, |f| f.width),
    );
    if sw != tw {
        return Err(Error::InvalidData(format!(
            "feature width differs between {} ({sw}) and {} ({tw})",
            source.name(),
            target.name()
        )));
    }
    match technique.kind() {
        TechniqueKind::Builtin => Err(Error::Unsupported(format!("{technique} has no trainable state to warm start"))),
        TechniqueKind::Supervised => {
            let boundary = target.split.boundary_cycle_index;
            let start = Instant::now();
            let target_set = fit_on_prefix(target, technique, boundary, false, cfg)?;
            let scratch_model = fit_supervised(technique, &target_set, cfg)?;
            let scratch_fit = start.elapsed().as_secs_f64();
            let scratch = replay_supervised(target, technique, Protocol::Scratch, scratch_model, scratch_fit, false, cfg)?;

            let start = Instant::now();
            let source_set = fit_on_prefix(source, technique, source.subject.cycles.len(), false, cfg)?;
            let pre = fit_supervised(technique, &source_set, cfg)?;
            let tuned = continue_supervised(technique, pre, &target_set, cfg)?;
            let pre_fit = start.elapsed().as_secs_f64();
            let pretrained = replay_supervised(target, technique, Protocol::Pretrain, tuned, pre_fit, false, cfg)?;
            Ok((scratch, pretrained))
        }
        TechniqueKind::Online => {
            let mut fresh = new_agent(technique, cfg)?;
            let scratch = replay_online(target, technique, Protocol::Scratch, &mut fresh, false)?;
            let mut agent = new_agent(technique, cfg)?;
            let feats = source.features(fam)?;
            for (cycle, f) in source.subject.cycles.iter().zip(feats) {
                online_cycle_update(&mut agent, cycle, f)?;
            }
            let pretrained = replay_online(target, technique, Protocol::Pretrain, &mut agent, false)?;
            Ok((scratch, pretrained))
        }
    }
}

/// Mean rAPFD over the first and last windows of failing test cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopResult {
    pub subject: String,
    pub technique: String,
    pub failing_test_cycles: usize,
    pub window: usize,
    pub first_mean_rapfd: f64,
    pub last_mean_rapfd: f64,
}

pub const EARLY_STOP_WINDOW: usize = 30;

/// Windows of 30 failing cycles, or half the failing cycles each when
/// fewer than 60 exist.
pub fn early_stop_compare(run: &RunRecord) -> Result<EarlyStopResult> {
    let values: Vec<f64> = run.rows.iter().filter_map(|r| r.rapfd).collect();
    let n = values.len();
    let window = if n >= 2 * EARLY_STOP_WINDOW { EARLY_STOP_WINDOW } else { n / 2 };
    if window == 0 {
        return Err(Error::Metric(format!(
            "{} on {}: {n} failing test cycle(s), need at least 2 for early-stop windows",
            run.technique, run.subject
        )));
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Ok(EarlyStopResult {
        subject: run.subject.clone(),
        technique: run.technique.clone(),
        failing_test_cycles: n,
        window,
        first_mean_rapfd: mean(&values[..window]),
        last_mean_rapfd: mean(&values[n - window..]),
    })
}

/// Everything one experiment produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub early_stop: Vec<EarlyStopResult>,
    /// Runs left out and why.
    pub skipped: Vec<String>,
}

enum Job {
    Run(usize, Technique, Protocol),
    Pretrain(usize, usize, Technique),
}

/// Loads and prepares every subject, then runs the (subject x technique x
/// protocol) grid on a pool of `jobs` threads. Output order is fixed by the
/// configuration, not by completion order.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let techniques = cfg.technique_list();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    pool.install(|| {
        let prepared: Vec<PreparedSubject> = cfg
            .subjects
            .par_iter()
            .map(|s| PreparedSubject::prepare(s.load()?, cfg, &techniques))
            .collect::<Result<_>>()?;

        let mut grid = Vec::new();
        let mut skipped = Vec::new();
        let p = &cfg.protocols;
        let enabled: Vec<Protocol> = [
            (p.baseline, Protocol::Baseline),
            (p.smote, Protocol::Smote),
            (p.early_stop, Protocol::EarlyStop),
        ]
        .into_iter()
        .filter_map(|(on, proto)| on.then_some(proto))
        .collect();
        for (si, ps) in prepared.iter().enumerate() {
            for &t in &techniques {
                for &proto in &enabled {
                    let ok = matches!(
                        (t.kind(), proto),
                        (_, Protocol::Baseline)
                            | (TechniqueKind::Supervised, Protocol::Smote)
                            | (TechniqueKind::Online | TechniqueKind::Builtin, Protocol::EarlyStop)
                    );
                    if ok {
                        grid.push(Job::Run(si, t, proto));
                    } else {
                        skipped.push(format!("{} / {t} / {proto}: not applicable", ps.name()));
                    }
                }
            }
        }
        if let Some(src_name) = &p.pretrain_source {
            let src = prepared
                .iter()
                .position(|ps| ps.name() == src_name)
                .ok_or_else(|| Error::Config(format!("pretrain source {src_name:?} not found")))?;
            for (ti, ps) in prepared.iter().enumerate() {
                if ti == src {
                    continue;
                }
                for &t in &techniques {
                    if t.kind() == TechniqueKind::Builtin {
                        skipped.push(format!("{} / {t} / pretrain: nothing to warm start", ps.name()));
                    } else {
                        grid.push(Job::Pretrain(src, ti, t));
                    }
                }
            }
        }

        let outputs: Vec<Vec<RunRecord>> = grid
            .par_iter()
            .map(|job| match *job {
                Job::Run(si, t, proto) => replay(&prepared[si], t, proto, cfg).map(|r| vec![r]),
                Job::Pretrain(src, ti, t) => {
                    pretrain_finetune(cfg, &prepared[src], &prepared[ti], t).map(|(a, b)| vec![a, b])
                }
            })
            .collect::<Result<_>>()?;
        let records: Vec<RunRecord> = outputs.into_iter().flatten().collect();

        let mut early_stop = Vec::new();
        for r in records.iter().filter(|r| r.protocol == Protocol::EarlyStop.label()) {
            match early_stop_compare(r) {
                Ok(e) => early_stop.push(e),
                Err(e) => skipped.push(format!("{} / {} / early-stop windows: {e}", r.subject, r.technique)),
            }
        }
        Ok(ExperimentResult {
            records,
            early_stop,
            skipped,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{SubjectSpec, TechniqueSpec};
    use crate::ingest::SynthConfig;

    fn cfg(techniques: &[Technique], synth: SynthConfig) -> ExperimentConfig {
        ExperimentConfig {
            train_record_target: 200,
            subjects: vec![SubjectSpec {
                synth: Some(synth),
                ..SubjectSpec::default()
            }],
            techniques: techniques.iter().map(|&t| TechniqueSpec::Name(t)).collect(),
            ..ExperimentConfig::default()
        }
    }

    fn small() -> SynthConfig {
        SynthConfig {
            n_cycles: 60,
            tests_per_cycle: 10,
            failure_rate_target: 0.2,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn oracle_is_perfect_on_every_failing_cycle() {
        let c = cfg(&[Technique::Oracle], small());
        let res = run_experiment(&c, 1).unwrap();
        let rows = &res.records[0].rows;
        assert!(rows.iter().any(|r| r.rapfd.is_some()));
        assert!(rows.iter().filter_map(|r| r.rapfd).all(|v| v == 1.0));
    }

    #[test]
    fn rows_cover_test_cycles_only() {
        let c = cfg(&[Technique::Random, Technique::Coleman], small());
        let res = run_experiment(&c, 2).unwrap();
        let ps = PreparedSubject::prepare(c.subjects[0].load().unwrap(), &c, &c.technique_list()).unwrap();
        let test_ids: Vec<u64> = ps.split.test_cycles(&ps.subject).iter().map(|c| c.cycle_id).collect();
        for r in &res.records {
            assert_eq!(r.rows.iter().map(|r| r.cycle_id).collect::<Vec<_>>(), test_ids);
        }
    }

    #[test]
    fn smote_is_skipped_for_online_and_builtin() {
        let mut c = cfg(&[Technique::Random, Technique::Coleman], small());
        c.protocols.smote = true;
        let res = run_experiment(&c, 1).unwrap();
        assert!(res.records.iter().all(|r| r.protocol == "baseline"));
        assert_eq!(res.skipped.len(), 2);
    }

    #[test]
    fn warm_start_rejects_wrong_variant() {
        let c = cfg(&[Technique::Mart], small());
        let ps = PreparedSubject::prepare(c.subjects[0].load().unwrap(), &c, &c.technique_list()).unwrap();
        let set = fit_on_prefix(&ps, Technique::Mart, ps.split.boundary_cycle_index, false, &c).unwrap();
        let model = fit_supervised(Technique::Mart, &set, &c).unwrap();
        let err = continue_supervised(Technique::RankNet, model, &set, &c).unwrap_err();
        assert!(err.to_string().contains("RankNet"));
    }

    #[test]
    fn early_stop_windows_shrink_symmetrically() {
        let row = |v: f64| CycleRow {
            subject: "s".into(),
            technique: "t".into(),
            protocol: "early-stop".into(),
            cycle_id: 0,
            n_tests: 2,
            n_failing: 1,
            apfd: Some(v),
            rapfd: Some(v),
            nrpa: 1.0,
            first_fail_time: Some(1.0),
            total_time: 2.0,
            prediction_time_s: 0.0,
            training_time_s: 0.0,
            order: "0;1".into(),
        };
        let mut run = RunRecord {
            subject: "s".into(),
            class: SubjectClass::MoreFailure,
            technique: "t".into(),
            protocol: "early-stop".into(),
            avg_commit_interval_s: 1.0,
            mean_training_time_s: 0.0,
            rows: vec![row(0.0), row(0.0), row(1.0), row(1.0), row(1.0)],
        };
        let e = early_stop_compare(&run).unwrap();
        assert_eq!((e.window, e.first_mean_rapfd, e.last_mean_rapfd), (2, 0.0, 1.0));
        run.rows.truncate(1);
        assert!(early_stop_compare(&run).is_err());
    }
}
