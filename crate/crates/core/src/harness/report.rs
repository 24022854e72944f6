use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::replay::{early_stop_compare, CycleRow, EarlyStopResult, ExperimentResult, Protocol, RunRecord};
use crate::domain::SubjectClass;
use crate::error::{Error, Result};
use crate::metrics::{friedman_iman_davenport, mean_rank_table, ntr, FriedmanResult, MeanRankTable};

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Deterministic aggregates of one run; timings live in the applicability table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub subject: String,
    pub class: SubjectClass,
    pub technique: String,
    pub protocol: String,
    pub test_cycles: usize,
    pub failing_cycles: usize,
    /// Over failing test cycles only.
    pub mean_rapfd: Option<f64>,
    pub mean_apfd: Option<f64>,
    pub mean_nrpa: Option<f64>,
    pub ntr: Option<f64>,
}

fn run_ntr(rows: &[CycleRow]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.rapfd.is_some())
        .filter_map(|r| r.first_fail_time.map(|t| (t, r.total_time)))
        .collect();
    ntr(&pairs).ok()
}

pub fn summarize(run: &RunRecord) -> SummaryRow {
    SummaryRow {
        subject: run.subject.clone(),
        class: run.class,
        technique: run.technique.clone(),
        protocol: run.protocol.clone(),
        test_cycles: run.rows.len(),
        failing_cycles: run.rows.iter().filter(|r| r.rapfd.is_some()).count(),
        mean_rapfd: mean(run.rows.iter().filter_map(|r| r.rapfd)),
        mean_apfd: mean(run.rows.iter().filter_map(|r| r.apfd)),
        mean_nrpa: mean(run.rows.iter().map(|r| r.nrpa)),
        ntr: run_ntr(&run.rows),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplicabilityFlags {
    pub fits_commit_interval: bool,
    pub worthwhile: bool,
}

/// A technique fits the commit interval when training plus prediction
/// finishes before the next commit, and is worthwhile when predicting takes
/// less time than running the cycle's tests.
pub fn applicability_flags(
    mean_training_s: f64,
    mean_prediction_s: f64,
    avg_commit_interval_s: f64,
    mean_test_duration_s: f64,
) -> ApplicabilityFlags {
    ApplicabilityFlags {
        fits_commit_interval: mean_training_s + mean_prediction_s < avg_commit_interval_s,
        worthwhile: mean_prediction_s < mean_test_duration_s,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicabilityRow {
    pub subject: String,
    pub technique: String,
    pub protocol: String,
    pub mean_training_time_s: f64,
    pub mean_prediction_time_s: f64,
    pub avg_commit_interval_s: f64,
    pub mean_test_duration_s: f64,
    pub fits_commit_interval: bool,
    pub worthwhile: bool,
    /// Fraction of test cycles whose prediction beat their own test duration.
    pub worthwhile_ratio: f64,
    pub ntr: Option<f64>,
    pub ntr_note: String,
}

pub fn applicability_report(run: &RunRecord) -> ApplicabilityRow {
    let n = run.rows.len().max(1) as f64;
    let mean_pred = run.rows.iter().map(|r| r.prediction_time_s).sum::<f64>() / n;
    let mean_dur = run.rows.iter().map(|r| r.total_time).sum::<f64>() / n;
    let flags = applicability_flags(run.mean_training_time_s, mean_pred, run.avg_commit_interval_s, mean_dur);
    let quick = run.rows.iter().filter(|r| r.prediction_time_s < r.total_time).count();
    let ntr = run_ntr(&run.rows);
    let ntr_note = match ntr {
        Some(_) => String::new(),
        None if run.rows.iter().all(|r| r.rapfd.is_none()) => "no failing test cycles".into(),
        None => "zero total execution time".into(),
    };
    ApplicabilityRow {
        subject: run.subject.clone(),
        technique: run.technique.clone(),
        protocol: run.protocol.clone(),
        mean_training_time_s: run.mean_training_time_s,
        mean_prediction_time_s: mean_pred,
        avg_commit_interval_s: run.avg_commit_interval_s,
        mean_test_duration_s: mean_dur,
        fits_commit_interval: flags.fits_commit_interval,
        worthwhile: flags.worthwhile,
        worthwhile_ratio: quick as f64 / n,
        ntr,
        ntr_note,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub subject: String,
    pub class: SubjectClass,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statistics {
    pub friedman: FriedmanResult,
    pub ranks: MeanRankTable,
}

/// A variant's mean rAPFD against the first variant of the same
/// (subject, technique).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub subject: String,
    pub technique: String,
    pub reference: String,
    pub variant: String,
    pub reference_rapfd: Option<f64>,
    pub rapfd: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    /// Column labels: the technique, suffixed with the protocol when runs
    /// use more than one.
    pub columns: Vec<String>,
    pub rapfd_grid: Vec<GridRow>,
    pub ntr_grid: Vec<GridRow>,
    /// Per class, the mean over subjects of each column.
    pub class_means: Vec<(SubjectClass, Vec<Option<f64>>)>,
    pub statistics: std::result::Result<Statistics, String>,
    pub deltas: Vec<DeltaRow>,
}

fn first_appearance<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

/// Friedman/Iman-Davenport and mean ranks over failing test cycles shared by
/// every column; each column holds one run per subject.
pub fn outcome_statistics(runs: &[&RunRecord], columns: &[(String, String)], labels: &[String]) -> Result<Statistics> {
    if columns.len() < 2 {
        return Err(Error::Metric(format!("need at least 2 techniques to compare, got {}", columns.len())));
    }
    let mut cells: Vec<HashMap<(&str, u64), f64>> = vec![HashMap::new(); columns.len()];
    let mut keys: Vec<(&str, u64)> = Vec::new();
    for r in runs {
        let Some(c) = columns.iter().position(|(t, p)| *t == r.technique && *p == r.protocol) else {
            continue;
        };
        for row in &r.rows {
            if let Some(v) = row.rapfd {
                let key = (r.subject.as_str(), row.cycle_id);
                if c == 0 {
                    keys.push(key);
                }
                cells[c].insert(key, v);
            }
        }
    }
    let matrix: Vec<Vec<f64>> = keys
        .iter()
        .filter_map(|k| cells.iter().map(|col| col.get(k).copied()).collect::<Option<Vec<f64>>>())
        .collect();
    let friedman = friedman_iman_davenport(&matrix)?;
    let ranks = mean_rank_table(&matrix, labels)?;
    Ok(Statistics { friedman, ranks })
}

pub fn compare_report(runs: &[RunRecord]) -> Result<CompareReport> {
    if runs.is_empty() {
        return Err(Error::Metric("nothing to compare: no runs".into()));
    }
    let protocols = first_appearance(runs.iter().map(|r| r.protocol.as_str()));
    let mut columns: Vec<(String, String)> = Vec::new();
    for r in runs {
        let key = (r.technique.clone(), r.protocol.clone());
        if !columns.contains(&key) {
            columns.push(key);
        }
    }
    let labels: Vec<String> = columns
        .iter()
        .map(|(t, p)| if protocols.len() > 1 { format!("{t} [{p}]") } else { t.clone() })
        .collect();
    let subjects = first_appearance(runs.iter().map(|r| r.subject.as_str()));
    let summaries: Vec<SummaryRow> = runs.iter().map(summarize).collect();
    let lookup = |s: &str, (t, p): &(String, String)| {
        summaries.iter().find(|x| x.subject == s && x.technique == *t && x.protocol == *p)
    };
    let mut rapfd_grid = Vec::new();
    let mut ntr_grid = Vec::new();
    for s in &subjects {
        let class = runs.iter().find(|r| &r.subject == s).map(|r| r.class).expect("subject from runs");
        rapfd_grid.push(GridRow {
            subject: s.clone(),
            class,
            values: columns.iter().map(|c| lookup(s, c).and_then(|x| x.mean_rapfd)).collect(),
        });
        ntr_grid.push(GridRow {
            subject: s.clone(),
            class,
            values: columns.iter().map(|c| lookup(s, c).and_then(|x| x.ntr)).collect(),
        });
    }
    let mut class_means = Vec::new();
    for class in [SubjectClass::MoreFailure, SubjectClass::LessFailure] {
        let rows: Vec<&GridRow> = rapfd_grid.iter().filter(|g| g.class == class).collect();
        if rows.is_empty() {
            continue;
        }
        let means = (0..columns.len()).map(|c| mean(rows.iter().filter_map(|g| g.values[c]))).collect();
        class_means.push((class, means));
    }

    let refs: Vec<&RunRecord> = runs.iter().collect();
    let statistics = outcome_statistics(&refs, &columns, &labels).map_err(|e| e.to_string());

    let mut deltas = Vec::new();
    for s in &subjects {
        let techniques = first_appearance(runs.iter().filter(|r| &r.subject == s).map(|r| r.technique.as_str()));
        for t in techniques {
            let variants: Vec<&SummaryRow> = summaries.iter().filter(|x| &x.subject == s && x.technique == t).collect();
            let Some((base, rest)) = variants.split_first() else { continue };
            for v in rest {
                deltas.push(DeltaRow {
                    subject: s.clone(),
                    technique: t.clone(),
                    reference: base.protocol.clone(),
                    variant: v.protocol.clone(),
                    reference_rapfd: base.mean_rapfd,
                    rapfd: v.mean_rapfd,
                    delta: base.mean_rapfd.zip(v.mean_rapfd).map(|(a, b)| b - a),
                });
            }
        }
    }
    Ok(CompareReport {
        columns: labels,
        rapfd_grid,
        ntr_grid,
        class_means,
        statistics,
        deltas,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// First column left-aligned, the rest right-aligned.
pub fn aligned_table(headers: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(headers);
    out.push('\n');
    out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

fn grid_text(report: &CompareReport, grid: &[GridRow], means: bool) -> String {
    let mut headers = vec!["subject".to_string(), "class".to_string()];
    headers.extend(report.columns.iter().cloned());
    let mut rows: Vec<Vec<String>> = grid
        .iter()
        .map(|g| {
            let mut r = vec![g.subject.clone(), g.class.label().to_string()];
            r.extend(g.values.iter().map(|v| opt(*v)));
            r
        })
        .collect();
    if means {
        for (class, vals) in &report.class_means {
            let mut r = vec![format!("mean ({})", class.label()), class.label().to_string()];
            r.extend(vals.iter().map(|v| opt(*v)));
            rows.push(r);
        }
    }
    aligned_table(&headers, &rows)
}

pub fn render_friedman(report: &CompareReport) -> String {
    let mut out = String::new();
    match &report.statistics {
        Err(reason) => {
            let _ = writeln!(out, "Friedman test not computed: {reason}");
        }
        Ok(st) => {
            let f = &st.friedman;
            let _ = writeln!(out, "outcomes (failing test cycles shared by all columns): {}", f.n_outcomes);
            let _ = writeln!(out, "techniques: {}", f.n_techniques);
            let _ = writeln!(out, "chi2_F = {:.6}  (p = {:.6e})", f.chi2_f, f.p_value_chi2);
            let _ = writeln!(out, "F_ID   = {:.6}  (p = {:.6e})", f.f_id, f.p_value_f);
            let _ = writeln!(out);
            let rows: Vec<Vec<String>> = st
                .ranks
                .entries
                .iter()
                .map(|e| vec![e.technique.clone(), format!("{:.4}", e.mean_rank)])
                .collect();
            out.push_str(&aligned_table(&["technique".into(), "mean rank".into()], &rows));
        }
    }
    out
}

pub fn render_tables(report: &CompareReport, result: &ExperimentResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Mean rAPFD over failing test cycles\n");
    out.push_str(&grid_text(report, &report.rapfd_grid, true));
    let _ = writeln!(out, "\nNTR\n");
    out.push_str(&grid_text(report, &report.ntr_grid, false));
    if !report.deltas.is_empty() {
        let _ = writeln!(out, "\nDelta mean rAPFD vs reference variant\n");
        let rows: Vec<Vec<String>> = report
            .deltas
            .iter()
            .map(|d| {
                vec![
                    d.subject.clone(),
                    d.technique.clone(),
                    d.reference.clone(),
                    d.variant.clone(),
                    opt(d.reference_rapfd),
                    opt(d.rapfd),
                    d.delta.map_or_else(|| "-".into(), |x| format!("{x:+.4}")),
                ]
            })
            .collect();
        let headers: Vec<String> = ["subject", "technique", "reference", "variant", "ref rAPFD", "rAPFD", "delta"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        out.push_str(&aligned_table(&headers, &rows));
    }
    if !result.early_stop.is_empty() {
        let _ = writeln!(out, "\nEarly stop: frozen after the training prefix\n");
        let rows: Vec<Vec<String>> = result
            .early_stop
            .iter()
            .map(|e| {
                vec![
                    e.subject.clone(),
                    e.technique.clone(),
                    e.failing_test_cycles.to_string(),
                    e.window.to_string(),
                    format!("{:.4}", e.first_mean_rapfd),
                    format!("{:.4}", e.last_mean_rapfd),
                ]
            })
            .collect();
        let headers: Vec<String> = ["subject", "technique", "failing", "window", "first", "last"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        out.push_str(&aligned_table(&headers, &rows));
    }
    let app: Vec<ApplicabilityRow> = result.records.iter().map(applicability_report).collect();
    if !app.is_empty() {
        let _ = writeln!(out, "\nApplicability (seconds)\n");
        let rows: Vec<Vec<String>> = app
            .iter()
            .map(|a| {
                vec![
                    a.subject.clone(),
                    a.technique.clone(),
                    a.protocol.clone(),
                    format!("{:.4}", a.mean_training_time_s),
                    format!("{:.4}", a.mean_prediction_time_s),
                    format!("{:.2}", a.avg_commit_interval_s),
                    format!("{:.2}", a.mean_test_duration_s),
                    a.fits_commit_interval.to_string(),
                    a.worthwhile.to_string(),
                ]
            })
            .collect();
        let headers: Vec<String> =
            ["subject", "technique", "protocol", "train", "predict", "commit gap", "test time", "fits", "worthwhile"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        out.push_str(&aligned_table(&headers, &rows));
    }
    if !result.skipped.is_empty() {
        let _ = writeln!(out, "\nSkipped\n");
        for s in &result.skipped {
            let _ = writeln!(out, "  {s}");
        }
    }
    out
}

/// Per-run context needed to rebuild `RunRecord`s from `per_cycle.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunInfo {
    subject: String,
    class: SubjectClass,
    technique: String,
    protocol: String,
    avg_commit_interval_s: f64,
    mean_training_time_s: f64,
}

pub const PER_CYCLE_CSV: &str = "per_cycle.csv";
pub const RUNS_CSV: &str = "runs.csv";
pub const SKIPPED_TXT: &str = "skipped.txt";

const EARLY_STOP_HEADERS: &[&str] = &[
    "subject",
    "technique",
    "failing_test_cycles",
    "window",
    "first_mean_rapfd",
    "last_mean_rapfd",
];
const DELTA_HEADERS: &[&str] = &["subject", "technique", "reference", "variant", "reference_rapfd", "rapfd", "delta"];

fn write_csv<T: Serialize>(path: &Path, rows: &[T], headers: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
    if rows.is_empty() && !headers.is_empty() {
        w.write_record(headers)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Serde(format!("{}: {other:?}", path.display())),
    })?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the raw per-cycle data plus every derived table.
pub fn write_outputs(dir: &Path, result: &ExperimentResult) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rows: Vec<&CycleRow> = result.records.iter().flat_map(|r| &r.rows).collect();
    write_csv(&dir.join(PER_CYCLE_CSV), &rows, &[])?;
    let infos: Vec<RunInfo> = result
        .records
        .iter()
        .map(|r| RunInfo {
            subject: r.subject.clone(),
            class: r.class,
            technique: r.technique.clone(),
            protocol: r.protocol.clone(),
            avg_commit_interval_s: r.avg_commit_interval_s,
            mean_training_time_s: r.mean_training_time_s,
        })
        .collect();
    write_csv(&dir.join(RUNS_CSV), &infos, &[])?;
    let mut skipped = result.skipped.join("\n");
    if !skipped.is_empty() {
        skipped.push('\n');
    }
    write_text(&dir.join(SKIPPED_TXT), &skipped)?;
    render_outputs(dir, result)
}

/// Writes the tables derived from `result`; never reruns a technique.
pub fn render_outputs(dir: &Path, result: &ExperimentResult) -> Result<()> {
    let summaries: Vec<SummaryRow> = result.records.iter().map(summarize).collect();
    write_csv(&dir.join("summary.csv"), &summaries, &[])?;
    let app: Vec<ApplicabilityRow> = result.records.iter().map(applicability_report).collect();
    write_csv(&dir.join("applicability.csv"), &app, &[])?;
    write_csv(&dir.join("early_stop.csv"), &result.early_stop, EARLY_STOP_HEADERS)?;
    let report = compare_report(&result.records)?;
    write_compare(dir, &report)?;
    write_text(&dir.join("tables.txt"), &render_tables(&report, result))
}

/// `friedman.txt`, `mean_ranks.csv` (critical-difference data) and `deltas.csv`.
pub fn write_compare(dir: &Path, report: &CompareReport) -> Result<()> {
    write_text(&dir.join("friedman.txt"), &render_friedman(report))?;
    #[derive(Serialize)]
    struct RankRow<'a> {
        technique: &'a str,
        mean_rank: f64,
    }
    #[derive(Serialize)]
    struct PairRow<'a> {
        a: &'a str,
        b: &'a str,
        mean_rank_diff: f64,
        wins: usize,
        losses: usize,
        ties: usize,
        p_value: f64,
        p_holm: f64,
    }
    match &report.statistics {
        Ok(st) => {
            let ranks: Vec<RankRow> = st
                .ranks
                .entries
                .iter()
                .map(|e| RankRow { technique: &e.technique, mean_rank: e.mean_rank })
                .collect();
            write_csv(&dir.join("mean_ranks.csv"), &ranks, &[])?;
            let pairs: Vec<PairRow> = st
                .ranks
                .pairwise
                .iter()
                .map(|p| PairRow {
                    a: &p.a,
                    b: &p.b,
                    mean_rank_diff: p.mean_rank_diff,
                    wins: p.wins,
                    losses: p.losses,
                    ties: p.ties,
                    p_value: p.p_value,
                    p_holm: p.p_holm,
                })
                .collect();
            write_csv(&dir.join("pairwise.csv"), &pairs, &[])?;
        }
        Err(_) => write_csv::<RankRow>(&dir.join("mean_ranks.csv"), &[], &["technique", "mean_rank"])?,
    }
    write_csv(&dir.join("deltas.csv"), &report.deltas, DELTA_HEADERS)
}

/// Rebuilds an experiment result from a run directory's CSVs.
pub fn load_outputs(dir: &Path) -> Result<ExperimentResult> {
    let infos: Vec<RunInfo> = read_csv(&dir.join(RUNS_CSV))?;
    let rows: Vec<CycleRow> = read_csv(&dir.join(PER_CYCLE_CSV))?;
    let mut by_run: HashMap<(String, String, String), Vec<CycleRow>> = HashMap::new();
    for r in rows {
        by_run
            .entry((r.subject.clone(), r.technique.clone(), r.protocol.clone()))
            .or_default()
            .push(r);
    }
    let records: Vec<RunRecord> = infos
        .into_iter()
        .map(|i| RunRecord {
            rows: by_run
                .remove(&(i.subject.clone(), i.technique.clone(), i.protocol.clone()))
                .unwrap_or_default(),
            subject: i.subject,
            class: i.class,
            technique: i.technique,
            protocol: i.protocol,
            avg_commit_interval_s: i.avg_commit_interval_s,
            mean_training_time_s: i.mean_training_time_s,
        })
        .collect();
    if let Some(((s, t, p), _)) = by_run.into_iter().next() {
        return Err(Error::InvalidData(format!("{PER_CYCLE_CSV} has rows for {s}/{t}/{p} missing from {RUNS_CSV}")));
    }
    let skipped_path = dir.join(SKIPPED_TXT);
    let skipped = match fs::read_to_string(&skipped_path) {
        Ok(text) => text.lines().map(str::to_string).collect(),
        Err(_) => Vec::new(),
    };
    let early_stop: Vec<EarlyStopResult> = records
        .iter()
        .filter(|r| r.protocol == Protocol::EarlyStop.label())
        .filter_map(|r| early_stop_compare(r).ok())
        .collect();
    Ok(ExperimentResult {
        records,
        early_stop,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(subject: &str, technique: &str, cycle_id: u64, rapfd: Option<f64>) -> CycleRow {
        CycleRow {
            subject: subject.into(),
            technique: technique.into(),
            protocol: "baseline".into(),
            cycle_id,
            n_tests: 3,
            n_failing: usize::from(rapfd.is_some()),
            apfd: rapfd,
            rapfd,
            nrpa: 1.0,
            first_fail_time: rapfd.map(|_| 2.0),
            total_time: 10.0,
            prediction_time_s: 0.5,
            training_time_s: 0.0,
            order: "0;1;2".into(),
        }
    }

    fn run(subject: &str, technique: &str, values: &[Option<f64>]) -> RunRecord {
        RunRecord {
            subject: subject.into(),
            class: SubjectClass::MoreFailure,
            technique: technique.into(),
            protocol: "baseline".into(),
            avg_commit_interval_s: 100.0,
            mean_training_time_s: 1.0,
            rows: values.iter().enumerate().map(|(i, v)| row(subject, technique, i as u64, *v)).collect(),
        }
    }

    #[test]
    fn flags_against_reference_constants() {
        let f = applicability_flags(0.0, 308.0, 1000.0, 33.0);
        assert!(!f.worthwhile);
        let f = applicability_flags(0.0, 0.01, 11_236.82, 33.0);
        assert!(f.fits_commit_interval && f.worthwhile);
    }

    #[test]
    fn summary_skips_passing_cycles() {
        let s = summarize(&run("s", "A", &[Some(1.0), None, Some(0.5)]));
        assert_eq!((s.test_cycles, s.failing_cycles), (3, 2));
        assert_eq!(s.mean_rapfd, Some(0.75));
        assert_eq!(s.ntr, Some(0.8));
    }

    #[test]
    fn ntr_omitted_without_failures() {
        let a = applicability_report(&run("s", "A", &[None, None]));
        assert_eq!(a.ntr, None);
        assert_eq!(a.ntr_note, "no failing test cycles");
    }

    #[test]
    fn dominant_technique_has_mean_rank_one() {
        let ones: Vec<Option<f64>> = (0..50).map(|_| Some(1.0)).collect();
        let halves: Vec<Option<f64>> = (0..50).map(|i| Some(0.2 + (i % 5) as f64 * 0.1)).collect();
        let rep = compare_report(&[run("s", "Oracle", &ones), run("s", "Random", &halves)]).unwrap();
        let st = rep.statistics.unwrap();
        assert_eq!(st.ranks.entries[0].technique, "Oracle");
        assert_eq!(st.ranks.entries[0].mean_rank, 1.0);
        assert_eq!(st.friedman.n_outcomes, 50);
    }

    #[test]
    fn single_technique_reports_reason() {
        let rep = compare_report(&[run("s", "A", &[Some(1.0), Some(0.0)])]).unwrap();
        assert!(rep.statistics.is_err());
        assert!(render_friedman(&rep).contains("not computed"));
    }

    #[test]
    fn deltas_against_first_protocol() {
        let base = run("s", "A", &[Some(0.5)]);
        let mut smote = run("s", "A", &[Some(0.75)]);
        smote.protocol = "smote".into();
        for r in &mut smote.rows {
            r.protocol = "smote".into();
        }
        let rep = compare_report(&[base, smote]).unwrap();
        assert_eq!(rep.columns, vec!["A [baseline]", "A [smote]"]);
        assert_eq!(rep.deltas.len(), 1);
        assert_eq!(rep.deltas[0].delta, Some(0.25));
    }

    #[test]
    fn outputs_round_trip_through_csv() {
        let res = ExperimentResult {
            records: vec![run("s", "A", &[Some(0.1 + 0.2), None]), run("s", "B", &[Some(1.0 / 3.0), None])],
            early_stop: Vec::new(),
            skipped: vec!["x / y / z: reason".into()],
        };
        let dir = tempfile::tempdir().unwrap();
        write_outputs(dir.path(), &res).unwrap();
        let back = load_outputs(dir.path()).unwrap();
        assert_eq!(back, res);
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        render_outputs(dir.path(), &back).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("summary.csv")).unwrap(), summary);
    }

    #[test]
    fn aligned_table_pads_columns() {
        let t = aligned_table(&["a".into(), "bb".into()], &[vec!["long".into(), "1".into()]]);
        assert_eq!(t, "a     bb\n----  --\nlong   1\n");
    }
}
