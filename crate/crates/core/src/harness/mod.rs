//! Experiment engine: chronological replay of CI cycles under the baseline,
//! SMOTE, early-stop and pretrain/finetune protocols, plus aggregation into
//! grids, statistics and applicability tables.

pub mod config;
mod replay;
pub mod report;
pub mod smote;
mod technique;

pub use config::{apply_override, ExperimentConfig, FeatureOptions, Protocols, SubjectSpec, TechniqueSpec};
pub use replay::{
    continue_supervised, early_stop_compare, fit_supervised, labeled_set, new_agent, pretrain_finetune, replay,
    run_experiment, CycleRow, EarlyStopResult, ExperimentResult, PreparedSubject, Protocol, RunRecord,
    EARLY_STOP_WINDOW,
};
pub use report::{
    aligned_table, applicability_flags, applicability_report, compare_report, load_outputs, render_outputs,
    summarize, write_compare, write_outputs, ApplicabilityFlags, ApplicabilityRow, CompareReport, DeltaRow,
    SummaryRow,
};
pub use smote::{smote_augment, synthetic_count, SmoteConfig};
pub use technique::{Technique, TechniqueKind};
