//! Deterministic simulation of one arm and one human: scenario loading, the
//! fixed-period tick loop, CSV telemetry and run metrics.
//!
//! Time is logical (`t = k T_S`); pacing against the wall clock is left to
//! the caller.

pub mod log;
pub mod metrics;
pub mod scenario;
pub mod sim;

use std::path::PathBuf;

pub use log::{log_to_string, read_log, LogRow, LogWriter};
pub use metrics::{compute_metrics, Metrics, MetricsOptions};
pub use scenario::{HumanSource, HumanSpec, MainConfig, Scenario, ScenarioFile, TargetSpec};
pub use sim::{run_scenario, Command, Simulation, TickRecord};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] pps_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("config mismatch: {0}")]
    Mismatch(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("{0}")]
    Command(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("log format: {0}")]
    LogFormat(String),
}
