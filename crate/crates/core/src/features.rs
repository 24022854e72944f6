//! Per-test feature vectors built from the history preceding each cycle.
//!
//! Every vector for cycle `c` is computed from cycles strictly before `c`
//! plus static per-record columns, so nothing observed during `c` leaks in.

use std::collections::{HashMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{Cycle, Subject};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureFamily {
    /// Learning-to-rank and RL family: failure history, time since last
    /// execution, previous execution time, static columns.
    BertolinoRl,
    /// Adds the fraction of past runs that failed.
    Deeporder,
    /// Bandit family; same inputs as the ranking family.
    Coleman,
}

impl FeatureFamily {
    pub fn label(self) -> &'static str {
        match self {
            FeatureFamily::BertolinoRl => "bertolino-rl-family",
            FeatureFamily::Deeporder => "deeporder",
            FeatureFamily::Coleman => "coleman",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSchema {
    pub family: FeatureFamily,
    pub history_window: usize,
    pub include_extra_columns: bool,
    /// Restricts pass-through to these columns; `None` keeps all.
    pub extra_columns: Option<Vec<String>>,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self {
            family: FeatureFamily::BertolinoRl,
            history_window: 4,
            include_extra_columns: true,
            extra_columns: None,
        }
    }
}

impl FeatureSchema {
    pub fn for_family(family: FeatureFamily) -> Self {
        Self {
            family,
            ..Self::default()
        }
    }
}

/// Feature rows of one cycle, aligned with the cycle's records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleFeatures {
    pub width: usize,
    pub data: Vec<f64>,
}

impl CycleFeatures {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flatten().copied().collect();
        Self { width, data }
    }

    pub fn len(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.data.len() / self.width
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.width.max(1))
    }

    /// Rows reordered by `order`; used for equivariance checks.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &i in order {
            data.extend_from_slice(self.row(i));
        }
        Self {
            width: self.width,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub cycles: Vec<CycleFeatures>,
}

impl FeatureMatrix {
    pub fn width(&self) -> usize {
        self.names.len()
    }
}

#[derive(Debug, Default)]
struct TestHistory {
    /// Most recent first, at most `keep` entries.
    recent: VecDeque<u8>,
    appearances: usize,
    failures: usize,
    last_timestamp: i64,
    duration_sum: f64,
}

impl TestHistory {
    fn verdict_back(&self, j: usize) -> f64 {
        self.recent.get(j).copied().map_or(0.0, f64::from)
    }

    fn prev_exec_time(&self) -> f64 {
        if self.appearances == 0 {
            0.0
        } else {
            self.duration_sum / self.appearances as f64
        }
    }

    fn observe(&mut self, verdict: u8, timestamp: i64, duration: f64, keep: usize) {
        self.recent.push_front(verdict);
        self.recent.truncate(keep);
        self.appearances += 1;
        self.failures += usize::from(verdict);
        self.last_timestamp = timestamp;
        self.duration_sum += duration;
    }
}

/// Replays a subject chronologically, exposing each cycle together with the
/// history state accumulated before it.
struct HistoryReplay<'a> {
    subject: &'a Subject,
    keep: usize,
    state: HashMap<&'a str, TestHistory>,
}

impl<'a> HistoryReplay<'a> {
    fn new(subject: &'a Subject, keep: usize) -> Self {
        Self {
            subject,
            keep,
            state: HashMap::new(),
        }
    }

    fn for_each_cycle(mut self, mut f: impl FnMut(&Cycle, &[Option<&TestHistory>])) {
        for cycle in &self.subject.cycles {
            {
                let hist: Vec<Option<&TestHistory>> = cycle
                    .records
                    .iter()
                    .map(|r| self.state.get(r.test_id.as_str()))
                    .collect();
                f(cycle, &hist);
            }
            for rec in &cycle.records {
                self.state.entry(rec.test_id.as_str()).or_default().observe(
                    rec.verdict.as_u8(),
                    cycle.commit_timestamp,
                    rec.duration,
                    self.keep,
                );
            }
        }
    }
}

fn extra_indices(subject: &Subject, schema: &FeatureSchema) -> Result<Vec<usize>> {
    if !schema.include_extra_columns {
        return Ok(Vec::new());
    }
    match &schema.extra_columns {
        None => Ok((0..subject.feature_columns.len()).collect()),
        Some(names) => names
            .iter()
            .map(|n| {
                subject.column_index(n).ok_or_else(|| {
                    Error::InvalidData(format!(
                        "feature column {n:?} not present in subject {:?}",
                        subject.name
                    ))
                })
            })
            .collect(),
    }
}

pub fn feature_names(subject: &Subject, schema: &FeatureSchema) -> Result<Vec<String>> {
    let mut names: Vec<String> = (1..=schema.history_window)
        .map(|i| format!("failure_history_{i}"))
        .collect();
    names.push("time_since_last_exec".into());
    names.push("prev_exec_time".into());
    if schema.family == FeatureFamily::Deeporder {
        names.push("failure_ratio".into());
    }
    for i in extra_indices(subject, schema)? {
        names.push(subject.feature_columns[i].clone());
    }
    Ok(names)
}

pub fn build_features(subject: &Subject, schema: &FeatureSchema) -> Result<FeatureMatrix> {
    if schema.history_window == 0 {
        return Err(Error::Config("history_window must be at least 1".into()));
    }
    let extras = extra_indices(subject, schema)?;
    let names = feature_names(subject, schema)?;
    let width = names.len();
    let w = schema.history_window;
    let deeporder = schema.family == FeatureFamily::Deeporder;

    let mut cycles = Vec::with_capacity(subject.cycles.len());
    HistoryReplay::new(subject, w.max(2)).for_each_cycle(|cycle, hist| {
        let mut data = Vec::with_capacity(width * cycle.len());
        for (rec, h) in cycle.records.iter().zip(hist) {
            match h {
                Some(h) => {
                    data.extend((0..w).map(|j| h.verdict_back(j)));
                    data.push((cycle.commit_timestamp - h.last_timestamp).max(0) as f64);
                    data.push(h.prev_exec_time());
                    if deeporder {
                        data.push(h.failures as f64 / h.appearances as f64);
                    }
                }
                None => {
                    data.extend(std::iter::repeat_n(0.0, w + 2 + usize::from(deeporder)));
                }
            }
            data.extend(extras.iter().map(|&i| rec.extra.get(i).copied().unwrap_or(0.0)));
        }
        cycles.push(CycleFeatures { width, data });
    });
    Ok(FeatureMatrix { names, cycles })
}

/// Weights of the history-based priority heuristic used to label the
/// pointwise regression technique.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeuristicWeights {
    pub decay: [f64; 3],
    pub duration_penalty: f64,
}

impl Default for HeuristicWeights {
    fn default() -> Self {
        Self {
            decay: [0.7, 0.2, 0.1],
            duration_penalty: 0.5,
        }
    }
}

/// Priority per (cycle, record):
/// `w1*v1 + w2*v2 + w3*sum(v_j, j>=3)/max(1, appearances-2) - penalty*prev_time/max_prev_time`
/// where `v_j` is the test's j-th most recent past verdict.
pub fn heuristic_priority(subject: &Subject, weights: &HeuristicWeights) -> Result<Vec<Vec<f64>>> {
    if weights.decay.iter().chain([&weights.duration_penalty]).any(|w| !(*w >= 0.0)) {
        return Err(Error::Config("heuristic weights must be nonnegative".into()));
    }
    let [w1, w2, w3] = weights.decay;
    let mut out = Vec::with_capacity(subject.cycles.len());
    HistoryReplay::new(subject, 2).for_each_cycle(|_cycle, hist| {
        let prev: Vec<f64> = hist.iter().map(|h| h.map_or(0.0, TestHistory::prev_exec_time)).collect();
        let max_prev = prev.iter().copied().fold(0.0, f64::max);
        let labels = hist
            .iter()
            .zip(&prev)
            .map(|(h, &p)| {
                let history = h.map_or(0.0, |h| {
                    let v1 = h.verdict_back(0);
                    let v2 = h.verdict_back(1);
                    let older = h.failures as f64 - v1 - v2;
                    let denom = (h.appearances as f64 - 2.0).max(1.0);
                    w1 * v1 + w2 * v2 + w3 * older / denom
                });
                let norm = if max_prev > 0.0 { p / max_prev } else { 0.0 };
                history - weights.duration_penalty * norm
            })
            .collect();
        out.push(labels);
    });
    Ok(out)
}

/// Debug dump: the ingestion columns followed by every feature component.
pub fn write_feature_dump<W: Write>(subject: &Subject, matrix: &FeatureMatrix, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![
        "cycle_id".to_string(),
        "commit_timestamp".into(),
        "test_id".into(),
        "duration_s".into(),
        "verdict".into(),
    ];
    header.extend(matrix.names.iter().cloned());
    wtr.write_record(&header)?;
    for (cycle, feats) in subject.cycles.iter().zip(&matrix.cycles) {
        for (i, rec) in cycle.records.iter().enumerate() {
            let mut row = vec![
                cycle.cycle_id.to_string(),
                cycle.commit_timestamp.to_string(),
                rec.test_id.clone(),
                rec.duration.to_string(),
                rec.verdict.as_u8().to_string(),
            ];
            row.extend(feats.row(i).iter().map(f64::to_string));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<feature dump>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{TestRecord, Verdict};

    fn rec(id: &str, d: f64, v: u8) -> TestRecord {
        TestRecord::new(id, d, Verdict::from_u8(v).unwrap())
    }

    fn subject(cycles: Vec<(i64, Vec<TestRecord>)>) -> Subject {
        Subject::new(
            "s",
            cycles
                .into_iter()
                .enumerate()
                .map(|(i, (ts, r))| Cycle::new(i as u64 + 1, ts, r))
                .collect(),
        )
    }

    #[test]
    fn cold_start_is_zero() {
        let s = subject(vec![
            (0, vec![rec("a", 1.0, 1)]),
            (10, vec![rec("a", 1.0, 0), rec("new", 4.0, 1)]),
        ]);
        let m = build_features(&s, &FeatureSchema::default()).unwrap();
        assert!(m.cycles[1].row(1).iter().all(|&v| v == 0.0));
        assert!(m.cycles[0].row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn failure_history_most_recent_first() {
        let s = subject(vec![
            (0, vec![rec("a", 1.0, 0)]),
            (1, vec![rec("a", 1.0, 0)]),
            (2, vec![rec("a", 1.0, 1)]),
            (3, vec![rec("a", 1.0, 1)]),
            (4, vec![rec("a", 1.0, 0)]),
        ]);
        let m = build_features(&s, &FeatureSchema::default()).unwrap();
        // Replay of the verdict stream [0, 0, 1, 1], most recent first.
        let stream = [0.0, 0.0, 1.0, 1.0];
        let expected: Vec<f64> = stream.iter().rev().copied().collect();
        assert_eq!(&m.cycles[4].row(0)[..4], expected.as_slice());
        assert_eq!(&m.cycles[4].row(0)[..4], &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn time_since_and_prev_exec() {
        let s = subject(vec![(100, vec![rec("a", 2.0, 0)]), (250, vec![rec("a", 4.0, 0)]), (300, vec![rec("a", 1.0, 0)])]);
        let m = build_features(&s, &FeatureSchema::default()).unwrap();
        assert_eq!(m.cycles[1].row(0)[4], 150.0);
        assert_eq!(m.cycles[1].row(0)[5], 2.0);
        assert_eq!(m.cycles[2].row(0)[5], 3.0);
    }

    #[test]
    fn missing_extra_column_errors() {
        let s = subject(vec![(0, vec![rec("a", 1.0, 0)])]);
        let schema = FeatureSchema {
            extra_columns: Some(vec!["loc".into()]),
            ..FeatureSchema::default()
        };
        assert!(build_features(&s, &schema).is_err());
    }

    #[test]
    fn extras_pass_through_and_deeporder_ratio() {
        let mut s = subject(vec![
            (0, vec![rec("a", 1.0, 1)]),
            (1, vec![rec("a", 1.0, 0)]),
            (2, vec![rec("a", 1.0, 0)]),
        ]);
        s.feature_columns = vec!["methods".into()];
        for c in &mut s.cycles {
            c.records[0].extra = vec![9.0];
        }
        let m = build_features(&s, &FeatureSchema::for_family(FeatureFamily::Deeporder)).unwrap();
        assert_eq!(m.names.last().unwrap(), "methods");
        assert_eq!(m.width(), 4 + 2 + 1 + 1);
        let row = m.cycles[2].row(0);
        assert_eq!(row[6], 0.5);
        assert_eq!(row[7], 9.0);
    }

    #[test]
    fn heuristic_examples() {
        let s = subject(vec![
            (0, vec![rec("a", 0.0, 1), rec("b", 0.0, 0)]),
            (1, vec![rec("a", 0.0, 0), rec("b", 0.0, 0), rec("c", 3.0, 0)]),
        ]);
        let p = heuristic_priority(&s, &HeuristicWeights::default()).unwrap();
        assert_eq!(p[0], vec![0.0, 0.0]);
        // a failed in the previous cycle only; no duration history.
        assert!((p[1][0] - 0.7).abs() < 1e-12);
        assert_eq!(p[1][1], 0.0);
        assert_eq!(p[1][2], 0.0);
    }

    #[test]
    fn heuristic_penalizes_longer_tests() {
        let s = subject(vec![
            (0, vec![rec("short", 1.0, 1), rec("long", 5.0, 1)]),
            (1, vec![rec("short", 1.0, 0), rec("long", 5.0, 0)]),
        ]);
        let p = heuristic_priority(&s, &HeuristicWeights::default()).unwrap();
        assert!(p[1][1] < p[1][0]);
    }

    #[test]
    fn heuristic_older_failures_are_averaged() {
        // Verdicts a: 1, 1, 0, 0 then current cycle; v1=0, v2=0, older sum 2 over 4-2 appearances.
        let s = subject(
            [1u8, 1, 0, 0, 0]
                .iter()
                .enumerate()
                .map(|(i, &v)| (i as i64, vec![rec("a", 0.0, v)]))
                .collect(),
        );
        let p = heuristic_priority(&s, &HeuristicWeights::default()).unwrap();
        assert!((p[4][0] - 0.1 * 2.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_weights_rejected() {
        let s = subject(vec![(0, vec![rec("a", 0.0, 1)])]);
        let w = HeuristicWeights { decay: [0.7, -0.2, 0.1], duration_penalty: 0.5 };
        assert!(heuristic_priority(&s, &w).is_err());
    }

    #[test]
    fn dump_has_header_and_rows() {
        let s = subject(vec![(0, vec![rec("a", 1.0, 1), rec("b", 2.0, 0)])]);
        let m = build_features(&s, &FeatureSchema::default()).unwrap();
        let mut buf = Vec::new();
        write_feature_dump(&s, &m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("cycle_id,commit_timestamp,test_id,duration_s,verdict,failure_history_1"));
    }
}
