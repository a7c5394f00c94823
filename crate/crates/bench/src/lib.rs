//! Benchmark harness for the `grabp` solvers: multi-trial runs on random,
//! Matrix Market and LP-derived instances, block-count sweeps, and CSV/JSON
//! reports.

use std::path::PathBuf;

use thiserror::Error;

pub mod config;
pub mod report;
pub mod runner;

pub use config::{BenchConfig, BlockCount, InstanceSpec, OutputFormat, RunArgs, SolverSpec};
pub use report::emit_report;
pub use runner::{block_sweep, run_benchmark, Aggregates, BenchReport, TrialRecord};

/// Exit code when any trial was stopped by the wall-clock cap.
pub const EXIT_FORCED: u8 = 3;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid value for `{field}`: {message}")]
    Usage { field: &'static str, message: String },
    #[error("config file {}: {message}", path.display())]
    ConfigFile { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Problem(#[from] grabp::ProblemError),
    #[error(transparent)]
    Solver(#[from] grabp::solvers::SolverError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl BenchError {
    /// 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            BenchError::Usage { .. } | BenchError::ConfigFile { .. } => 2,
            _ => 1,
        }
    }
}
