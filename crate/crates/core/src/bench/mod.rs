//! Training, evaluation, multi-seed sweeps, complexity census and reports.

mod complexity;
mod config;
mod metrics;
mod prepare;
mod report;
mod sweep;
mod train;

pub use complexity::{
    complexity_row, complexity_table, complexity_table_with, estimate_quantum_params, format_gamma,
    gamma, ComplexityRow, GATES_PER_QUBIT_LAYER,
};
pub use config::{
    ArchOverride, DataConfig, DataSource, OutputConfig, RunConfig, SynthShape, SyntheticSource,
    TrainConfig, DEFAULT_SEQ_LENS,
};
pub use metrics::{evaluate, metrics, persistence_baseline, predictions, Metrics};
pub use prepare::{load_series, prepare, Prepared};
pub use report::{
    build_report, complexity_csv, emit_report, pivot_csv, runs_csv, write_report, Meta, Report,
    RunRow, COMPLEXITY_HEADER, RUNS_HEADER,
};
pub use sweep::{
    aggregate, jobs, multi_run, pivot, run_job, AggregateRow, Failure, Job, Pivot, Sweep,
};
pub use train::{train, EpochLog, MetricSpace, RunResult};

use crate::data::DataError;
use crate::models::{ModelError, ModelKind};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{0}")]
    Config(String),
    #[error(
        "non-finite loss for {model} at epoch {epoch}, batch {batch} (lr {lr}, parameter norm {param_norm:.6e}, gradient norm {grad_norm:.6e})"
    )]
    NonFinite {
        model: ModelKind,
        epoch: usize,
        batch: usize,
        lr: f64,
        param_norm: f64,
        grad_norm: f64,
    },
    #[error("report: {0}")]
    Report(String),
}

pub type Result<T> = std::result::Result<T, BenchError>;
