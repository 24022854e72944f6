//! Test case prioritization for continuous integration.
//!
//! The crate models CI histories as subjects made of chronologically ordered
//! cycles, evaluates prioritized sequences with APFD-family metrics, trains
//! supervised and reinforcement learning rankers, and replays experiments
//! over CSV or synthetic histories.

pub mod domain;
pub mod error;
pub mod features;
pub mod harness;
pub mod ingest;
pub mod metrics;
pub mod nn;
pub mod rank_rl;
pub mod rank_sl;

pub use domain::{
    classify_subject, optimal_sequence, Cycle, RankedSequence, Subject, SubjectClass, TestRecord,
    Verdict, Violation,
};
pub use error::{Error, Result};
