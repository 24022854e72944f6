//! CSV ingestion, train/test splitting and synthetic subject generation.

mod synth;

pub use synth::{generate_synthetic, SynthConfig, LATENT_COLUMN, METHODS_COLUMN};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Cycle, Subject, TestRecord, Verdict};
use crate::error::{Error, Result};

pub const REQUIRED_COLUMNS: [&str; 5] = [
    "cycle_id",
    "commit_timestamp",
    "test_id",
    "duration_s",
    "verdict",
];

/// Columns expected in an input file. The required columns are fixed;
/// `extra_columns` lists feature columns that must also be present
/// (any other extra columns are kept as well).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub extra_columns: Vec<String>,
}

pub fn load_subject(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<Subject> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "subject".to_string());
    read_subject(file, &name, schema)
}

fn malformed(line: u64, message: impl Into<String>) -> Error {
    Error::Malformed {
        line,
        message: message.into(),
    }
}

pub fn read_subject<R: Read>(reader: R, name: &str, schema: &DatasetSchema) -> Result<Subject> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(malformed(1, "empty file"));
    }
    let mut positions = [0usize; 5];
    for (slot, col) in positions.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| malformed(1, format!("missing required column {col:?}")))?;
    }
    let extra: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| !positions.contains(i))
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    for want in &schema.extra_columns {
        if !extra.iter().any(|(_, h)| h == want) {
            return Err(malformed(1, format!("missing feature column {want:?}")));
        }
    }
    let [p_cycle, p_ts, p_test, p_dur, p_verdict] = positions;

    let mut cycles: BTreeMap<u64, (i64, u64, Vec<TestRecord>)> = BTreeMap::new();
    let mut rows = 0usize;
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != header.len() {
            return Err(malformed(
                line,
                format!("expected {} fields, found {}", header.len(), row.len()),
            ));
        }
        let cycle_id: u64 = row[p_cycle]
            .parse()
            .map_err(|_| malformed(line, format!("bad cycle_id {:?}", &row[p_cycle])))?;
        let ts: i64 = row[p_ts]
            .parse()
            .map_err(|_| malformed(line, format!("bad commit_timestamp {:?}", &row[p_ts])))?;
        let duration: f64 = row[p_dur]
            .parse()
            .map_err(|_| malformed(line, format!("bad duration_s {:?}", &row[p_dur])))?;
        let verdict = row[p_verdict]
            .parse::<u8>()
            .ok()
            .and_then(Verdict::from_u8)
            .ok_or_else(|| {
                malformed(line, format!("verdict must be 0 or 1, got {:?}", &row[p_verdict]))
            })?;
        let mut values = Vec::with_capacity(extra.len());
        for (i, h) in &extra {
            let v: f64 = row[*i]
                .parse()
                .map_err(|_| malformed(line, format!("bad value {:?} in column {h:?}", &row[*i])))?;
            values.push(v);
        }
        let record = TestRecord {
            test_id: row[p_test].to_string(),
            duration,
            verdict,
            extra: values,
        };
        let entry = cycles.entry(cycle_id).or_insert((ts, line, Vec::new()));
        if entry.0 != ts {
            return Err(malformed(
                line,
                format!(
                    "cycle {cycle_id} has commit_timestamp {ts} but line {} gave {}",
                    entry.1, entry.0
                ),
            ));
        }
        entry.2.push(record);
        rows += 1;
    }
    if rows == 0 {
        return Err(malformed(1, "no data rows"));
    }
    let mut cycles: Vec<Cycle> = cycles
        .into_iter()
        .map(|(id, (ts, _, records))| Cycle::new(id, ts, records))
        .collect();
    cycles.sort_by_key(|c| (c.commit_timestamp, c.cycle_id));
    Ok(Subject {
        name: name.to_string(),
        cycles,
        feature_columns: extra.into_iter().map(|(_, h)| h).collect(),
    })
}

/// Writes the canonical CSV form; output is byte-stable for a given subject.
pub fn write_subject<W: Write>(subject: &Subject, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
    header.extend(subject.feature_columns.iter().map(String::as_str));
    wtr.write_record(&header)?;
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for cycle in &subject.cycles {
        for rec in &cycle.records {
            fields.clear();
            fields.push(cycle.cycle_id.to_string());
            fields.push(cycle.commit_timestamp.to_string());
            fields.push(rec.test_id.clone());
            fields.push(rec.duration.to_string());
            fields.push(rec.verdict.as_u8().to_string());
            fields.extend(rec.extra.iter().map(f64::to_string));
            wtr.write_record(&fields)?;
        }
    }
    wtr.flush()
        .map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_subject(subject: &Subject, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_subject(subject, std::io::BufWriter::new(file))
}

/// Training prefix of a subject: the shortest run of leading cycles whose
/// record count reaches the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainTestSplit {
    /// Number of training cycles; cycles `[0, boundary)` train, the rest test.
    pub boundary_cycle_index: usize,
    pub train_record_target: usize,
    pub train_records: usize,
}

impl TrainTestSplit {
    pub fn train_cycles<'a>(&self, subject: &'a Subject) -> &'a [Cycle] {
        &subject.cycles[..self.boundary_cycle_index]
    }

    pub fn test_cycles<'a>(&self, subject: &'a Subject) -> &'a [Cycle] {
        &subject.cycles[self.boundary_cycle_index..]
    }

    pub fn is_test_cycle(&self, index: usize) -> bool {
        index >= self.boundary_cycle_index
    }
}

pub fn split_train_test(subject: &Subject, train_record_target: usize) -> Result<TrainTestSplit> {
    if train_record_target == 0 {
        return Err(Error::InvalidData(
            "train_record_target must be at least 1".into(),
        ));
    }
    let mut cumulative = 0usize;
    for (i, cycle) in subject.cycles.iter().enumerate() {
        cumulative += cycle.len();
        if cumulative >= train_record_target {
            let boundary = i + 1;
            if boundary >= subject.cycles.len() {
                break;
            }
            return Ok(TrainTestSplit {
                boundary_cycle_index: boundary,
                train_record_target,
                train_records: cumulative,
            });
        }
    }
    Err(Error::InvalidData(format!(
        "subject {:?} too small: {} records in {} cycles cannot supply {} training records and leave a test cycle",
        subject.name,
        subject.record_count(),
        subject.cycles.len(),
        train_record_target
    )))
}
