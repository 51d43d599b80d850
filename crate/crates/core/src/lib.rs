//! Analysis toolkit for DRAM correctable-error telemetry.
//!
//! The crate covers the full desk-scale workflow for predicting
//! uncorrectable memory errors (UEs) from correctable-error (CE) logs:
//!
//! * [`trace`] — canonical event/trace data model and validation,
//! * [`ingest`] — parsers for JSONL and mapped-CSV log exports,
//! * [`fault`] — per-DIMM fault-mode diagnosis and error-bit statistics,
//! * [`features`] — windowed feature extraction and UE labeling,
//! * [`predict`] — interchangeable predictors behind a name-keyed registry,
//! * [`eval`] — window-matched confusion accounting and the VIRR metric,
//! * [`sim`] — seeded fault-injection simulator with platform profiles,
//! * [`analysis`] — report assembly for the analyze/report pipeline stages.

pub mod analysis;
pub mod eval;
pub mod fault;
pub mod features;
pub mod ingest;
pub mod predict;
pub mod sim;
pub mod trace;

#[cfg(test)]
pub(crate) mod testutil;

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid platform profile: {0}")]
    InvalidProfile(String),
    #[error("feature schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("unknown model kind '{0}'")]
    UnknownModel(String),
    #[error("malformed data: {0}")]
    Data(String),
    #[error("reject rate {rate:.4} exceeds ceiling {ceiling:.4} ({rejected}/{total} lines)")]
    RejectCeiling {
        rate: f64,
        ceiling: f64,
        rejected: usize,
        total: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

/// One millisecond-denominated minute.
pub const MINUTE_MS: i64 = 60_000;
/// One millisecond-denominated hour.
pub const HOUR_MS: i64 = 3_600_000;
/// One millisecond-denominated day.
pub const DAY_MS: i64 = 86_400_000;
