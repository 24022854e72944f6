//! CI history model: test records, cycles, subjects, and ranked sequences.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Outcome of one test class in one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Verdict::Pass),
            1 => Some(Verdict::Fail),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.as_u8())
    }

    pub fn is_fail(self) -> bool {
        self == Verdict::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub test_id: String,
    /// Seconds.
    pub duration: f64,
    pub verdict: Verdict,
    /// Values of the subject's extra feature columns, in column order.
    pub extra: Vec<f64>,
}

impl TestRecord {
    pub fn new(test_id: impl Into<String>, duration: f64, verdict: Verdict) -> Self {
        Self {
            test_id: test_id.into(),
            duration,
            verdict,
            extra: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub cycle_id: u64,
    /// Seconds since epoch.
    pub commit_timestamp: i64,
    pub records: Vec<TestRecord>,
}

impl Cycle {
    pub fn new(cycle_id: u64, commit_timestamp: i64, records: Vec<TestRecord>) -> Self {
        Self {
            cycle_id,
            commit_timestamp,
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of failing tests; each one counts as a distinct fault.
    pub fn fail_count(&self) -> usize {
        self.records.iter().filter(|r| r.verdict.is_fail()).count()
    }

    pub fn total_duration(&self) -> f64 {
        self.records.iter().map(|r| r.duration).sum()
    }

    pub fn is_failing(&self) -> bool {
        self.records.iter().any(|r| r.verdict.is_fail())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub name: String,
    pub cycles: Vec<Cycle>,
    /// Names of the extra numeric columns carried by every record.
    pub feature_columns: Vec<String>,
}

impl Subject {
    pub fn new(name: impl Into<String>, cycles: Vec<Cycle>) -> Self {
        Self {
            name: name.into(),
            cycles,
            feature_columns: Vec::new(),
        }
    }

    pub fn record_count(&self) -> usize {
        self.cycles.iter().map(Cycle::len).sum()
    }

    pub fn failure_rate(&self) -> f64 {
        let total = self.record_count();
        if total == 0 {
            return 0.0;
        }
        let failing: usize = self.cycles.iter().map(Cycle::fail_count).sum();
        failing as f64 / total as f64
    }

    /// Mean gap between consecutive commit timestamps, 0 for fewer than two cycles.
    pub fn avg_commit_interval(&self) -> f64 {
        if self.cycles.len() < 2 {
            return 0.0;
        }
        let gaps: f64 = self
            .cycles
            .windows(2)
            .map(|w| (w[1].commit_timestamp - w[0].commit_timestamp) as f64)
            .sum();
        gaps / (self.cycles.len() - 1) as f64
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_columns.iter().position(|c| c == name)
    }

    /// Reports every broken invariant; never aborts.
    pub fn validate(&self) -> Vec<Violation> {
        validate_subject(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub cycle_id: Option<u64>,
    pub test_id: Option<String>,
    pub rule: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.cycle_id, &self.test_id) {
            (Some(c), Some(t)) => write!(f, "cycle {c}, test {t:?}: {}", self.rule),
            (Some(c), None) => write!(f, "cycle {c}: {}", self.rule),
            (None, Some(t)) => write!(f, "test {t:?}: {}", self.rule),
            (None, None) => f.write_str(self.rule),
        }
    }
}

pub const RULE_NONEMPTY_CYCLE: &str = "records nonempty";
pub const RULE_UNIQUE_TEST: &str = "test_id unique within its cycle";
pub const RULE_NONEMPTY_TEST_ID: &str = "test_id nonempty";
pub const RULE_DURATION: &str = "duration ≥ 0";
pub const RULE_CYCLE_ORDER: &str = "cycle_ids strictly increasing";
pub const RULE_TIMESTAMP_ORDER: &str = "cycles sorted ascending by commit_timestamp";
pub const RULE_EXTRA_WIDTH: &str = "one value per feature column";
pub const RULE_EXTRA_FINITE: &str = "feature values finite";

pub fn validate_subject(subject: &Subject) -> Vec<Violation> {
    let mut out = Vec::new();
    let width = subject.feature_columns.len();
    for (i, cycle) in subject.cycles.iter().enumerate() {
        let cid = Some(cycle.cycle_id);
        if i > 0 {
            let prev = &subject.cycles[i - 1];
            if cycle.cycle_id <= prev.cycle_id {
                out.push(Violation {
                    cycle_id: cid,
                    test_id: None,
                    rule: RULE_CYCLE_ORDER,
                });
            }
            if cycle.commit_timestamp < prev.commit_timestamp {
                out.push(Violation {
                    cycle_id: cid,
                    test_id: None,
                    rule: RULE_TIMESTAMP_ORDER,
                });
            }
        }
        if cycle.records.is_empty() {
            out.push(Violation {
                cycle_id: cid,
                test_id: None,
                rule: RULE_NONEMPTY_CYCLE,
            });
        }
        let mut seen = HashSet::new();
        let mut reported = HashSet::new();
        for rec in &cycle.records {
            let tid = Some(rec.test_id.clone());
            if rec.test_id.is_empty() {
                out.push(Violation {
                    cycle_id: cid,
                    test_id: None,
                    rule: RULE_NONEMPTY_TEST_ID,
                });
            }
            if !seen.insert(rec.test_id.as_str()) && reported.insert(rec.test_id.as_str()) {
                out.push(Violation {
                    cycle_id: cid,
                    test_id: tid.clone(),
                    rule: RULE_UNIQUE_TEST,
                });
            }
            if !(rec.duration >= 0.0 && rec.duration.is_finite()) {
                out.push(Violation {
                    cycle_id: cid,
                    test_id: tid.clone(),
                    rule: RULE_DURATION,
                });
            }
            if rec.extra.len() != width {
                out.push(Violation {
                    cycle_id: cid,
                    test_id: tid.clone(),
                    rule: RULE_EXTRA_WIDTH,
                });
            } else if rec.extra.iter().any(|v| !v.is_finite()) {
                out.push(Violation {
                    cycle_id: cid,
                    test_id: tid,
                    rule: RULE_EXTRA_FINITE,
                });
            }
        }
    }
    out
}

/// A permutation of one cycle's tests.
///
/// `order` lists record indices of the cycle, first-scheduled first.
/// `scores` is indexed by record index (input order), higher = earlier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSequence {
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RankedSequence {
    /// Descending score, ties broken by input order.
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        Self { order, scores }
    }

    /// Wraps an explicit order; scores are assigned so that `from_scores`
    /// would reproduce it.
    pub fn from_order(order: Vec<usize>) -> Self {
        let k = order.len();
        let mut scores = vec![0.0; k];
        for (pos, &idx) in order.iter().enumerate() {
            scores[idx] = (k - pos) as f64;
        }
        Self { order, scores }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// 1-based position of every record index.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.order.len()];
        for (pos, &idx) in self.order.iter().enumerate() {
            ranks[idx] = pos + 1;
        }
        ranks
    }

    /// True when `order` is a bijection onto `0..n`.
    pub fn is_permutation_of(&self, n: usize) -> bool {
        if self.order.len() != n {
            return false;
        }
        let mut seen = vec![false; n];
        for &i in &self.order {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        true
    }

    pub fn test_ids<'a>(&self, cycle: &'a Cycle) -> Vec<&'a str> {
        self.order
            .iter()
            .map(|&i| cycle.records[i].test_id.as_str())
            .collect()
    }
}

/// Failing tests first, then passing; ascending duration within each group,
/// input order on exact duration ties.
pub fn optimal_sequence(cycle: &Cycle) -> RankedSequence {
    let mut order: Vec<usize> = (0..cycle.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = &cycle.records[a];
        let rb = &cycle.records[b];
        rb.verdict
            .as_u8()
            .cmp(&ra.verdict.as_u8())
            .then(ra.duration.total_cmp(&rb.duration))
    });
    RankedSequence::from_order(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubjectClass {
    MoreFailure,
    LessFailure,
}

impl SubjectClass {
    pub fn label(self) -> &'static str {
        match self {
            SubjectClass::MoreFailure => "more-failure",
            SubjectClass::LessFailure => "less-failure",
        }
    }
}

pub const MORE_FAILURE_THRESHOLD: f64 = 0.01;

pub fn classify_failure_rate(rate: f64) -> SubjectClass {
    if rate > MORE_FAILURE_THRESHOLD {
        SubjectClass::MoreFailure
    } else {
        SubjectClass::LessFailure
    }
}

pub fn classify_subject(subject: &Subject) -> SubjectClass {
    classify_failure_rate(subject.failure_rate())
}
