use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::smote::SmoteConfig;
use super::technique::Technique;
use crate::domain::Subject;
use crate::error::{Error, Result};
use crate::features::{FeatureFamily, FeatureSchema, HeuristicWeights};
use crate::ingest::{generate_synthetic, load_subject, DatasetSchema, SynthConfig};
use crate::rank_rl::RLConfig;
use crate::rank_sl::SLConfig;

/// A subject read from CSV or generated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubjectSpec {
    /// Defaults to the file stem or the synthetic config's name.
    pub name: Option<String>,
    pub path: Option<PathBuf>,
    /// Feature columns the CSV must provide.
    pub required_columns: Vec<String>,
    pub synth: Option<SynthConfig>,
}

impl SubjectSpec {
    pub fn display_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        if let Some(p) = &self.path {
            return p
                .file_stem()
                .map_or_else(|| "subject".to_string(), |s| s.to_string_lossy().into_owned());
        }
        self.synth.as_ref().map_or_else(|| "subject".to_string(), |s| s.name.clone())
    }

    pub fn load(&self) -> Result<Subject> {
        let mut subject = match (&self.path, &self.synth) {
            (Some(path), None) => load_subject(
                path,
                &DatasetSchema {
                    extra_columns: self.required_columns.clone(),
                },
            )?,
            (None, Some(synth)) => generate_synthetic(synth)?,
            _ => {
                return Err(Error::Config(format!(
                    "subject {:?} needs exactly one of `path` or `synth`",
                    self.display_name()
                )))
            }
        };
        subject.name = self.display_name();
        Ok(subject)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TechniqueSpec {
    Name(Technique),
    Detailed {
        name: Technique,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        family: Option<FeatureFamily>,
    },
}

impl TechniqueSpec {
    pub fn technique(&self) -> Technique {
        match self {
            TechniqueSpec::Name(t) | TechniqueSpec::Detailed { name: t, .. } => *t,
        }
    }

    fn requested_family(&self) -> Option<FeatureFamily> {
        match self {
            TechniqueSpec::Name(_) => None,
            TechniqueSpec::Detailed { family, .. } => *family,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Protocols {
    pub baseline: bool,
    /// SMOTE-augmented training for the supervised techniques.
    pub smote: bool,
    /// Freeze online agents once the training prefix is consumed.
    pub early_stop: bool,
    /// Subject used to pretrain before finetuning on every other subject.
    pub pretrain_source: Option<String>,
}

impl Default for Protocols {
    fn default() -> Self {
        Self {
            baseline: true,
            smote: false,
            early_stop: false,
            pretrain_source: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureOptions {
    pub history_window: usize,
    pub include_extra_columns: bool,
    pub extra_columns: Option<Vec<String>>,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        let s = FeatureSchema::default();
        Self {
            history_window: s.history_window,
            include_extra_columns: s.include_extra_columns,
            extra_columns: s.extra_columns,
        }
    }
}

impl FeatureOptions {
    pub fn schema(&self, family: FeatureFamily) -> FeatureSchema {
        FeatureSchema {
            family,
            history_window: self.history_window,
            include_extra_columns: self.include_extra_columns,
            extra_columns: self.extra_columns.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    /// Records in the training prefix of each subject.
    pub train_record_target: usize,
    /// Refit supervised models every N test cycles on all earlier cycles; 0 fits once.
    pub refit_every: usize,
    pub output_dir: Option<PathBuf>,
    pub subjects: Vec<SubjectSpec>,
    pub techniques: Vec<TechniqueSpec>,
    pub protocols: Protocols,
    pub features: FeatureOptions,
    pub heuristic: HeuristicWeights,
    pub smote: SmoteConfig,
    pub sl: SLConfig,
    pub rl: RLConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seed: 1,
            train_record_target: 2000,
            refit_every: 0,
            output_dir: None,
            subjects: Vec::new(),
            techniques: Vec::new(),
            protocols: Protocols::default(),
            features: FeatureOptions::default(),
            heuristic: HeuristicWeights::default(),
            smote: SmoteConfig::default(),
            sl: SLConfig::default(),
            rl: RLConfig::default(),
        }
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `a.b.c=value` to a parsed document. Numeric segments index
/// arrays; missing tables are created. Values parse as TOML, falling back to
/// a bare string.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} is malformed")));
    }
    let value = parse_override_value(raw.trim());
    let (last, path) = parts.split_last().expect("nonempty key");
    let mut cur: &mut toml::Value = doc
        .entry(path.first().copied().unwrap_or(last).to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    if path.is_empty() {
        *cur = value;
        return Ok(());
    }
    for seg in path.iter().skip(1).chain(std::iter::once(last)) {
        let is_last = std::ptr::eq(seg, last);
        cur = match cur {
            toml::Value::Table(t) => {
                if is_last {
                    t.insert((*seg).to_string(), value);
                    return Ok(());
                }
                t.entry((*seg).to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| Error::Config(format!("override {key:?}: {seg:?} is not an array index")))?;
                let len = a.len();
                let slot = a
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("override {key:?}: index {idx} out of range ({len})")))?;
                if is_last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(Error::Config(format!(
                    "override {key:?}: {seg:?} is below a non-table value"
                )))
            }
        };
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text with overrides applied before validation. Relative
    /// subject paths resolve against `base_dir`.
    pub fn from_toml(text: &str, overrides: &[String], base_dir: Option<&Path>) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: ExperimentConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Some(base) = base_dir {
            for s in &mut cfg.subjects {
                if let Some(p) = &s.path {
                    if p.is_relative() {
                        s.path = Some(base.join(p));
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, overrides, path.parent())
    }

    /// Sets the master seed and every derived component seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.sl.seed = seed;
        self.rl.seed = seed;
        self.smote.seed = seed;
    }

    pub fn technique_list(&self) -> Vec<Technique> {
        self.techniques.iter().map(TechniqueSpec::technique).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.subjects.is_empty() {
            return bad("at least one subject is required".into());
        }
        if self.techniques.is_empty() {
            return bad("at least one technique is required".into());
        }
        if self.train_record_target == 0 {
            return bad("train_record_target must be at least 1".into());
        }
        let mut names = HashSet::new();
        for s in &self.subjects {
            if !names.insert(s.display_name()) {
                return bad(format!("duplicate subject name {:?}", s.display_name()));
            }
            if s.path.is_some() == s.synth.is_some() {
                return bad(format!(
                    "subject {:?} needs exactly one of `path` or `synth`",
                    s.display_name()
                ));
            }
        }
        let mut seen = HashSet::new();
        for spec in &self.techniques {
            let t = spec.technique();
            if !seen.insert(t) {
                return bad(format!("technique {t} listed twice"));
            }
            if let Some(f) = spec.requested_family() {
                if f != t.family() {
                    return bad(format!(
                        "technique {t} is defined on the {} feature family, not {}",
                        t.family().label(),
                        f.label()
                    ));
                }
            }
        }
        if let Some(src) = &self.protocols.pretrain_source {
            if !names.contains(src) {
                return bad(format!("pretrain source {src:?} is not a configured subject"));
            }
            if names.len() < 2 {
                return bad("pretraining needs a target subject different from the source".into());
            }
        }
        if !(self.protocols.baseline
            || self.protocols.smote
            || self.protocols.early_stop
            || self.protocols.pretrain_source.is_some())
        {
            return bad("no protocol enabled".into());
        }
        if self.features.history_window == 0 {
            return bad("features.history_window must be at least 1".into());
        }
        self.smote.check()?;
        Ok(())
    }

    /// Complete TOML echo including every default.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }
}
