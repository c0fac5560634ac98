use super::complexity::{format_gamma, ComplexityRow};
use super::config::RunConfig;
use super::sweep::{aggregate, pivot, AggregateRow, Failure, Pivot, Sweep};
use super::train::{EpochLog, MetricSpace, RunResult};
use super::{BenchError, Result};
use crate::models::ModelKind;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const RUNS_HEADER: [&str; 7] = ["model", "seq_len", "seed", "mae", "mse", "epochs", "wall_s"];

pub const COMPLEXITY_HEADER: [&str; 12] = [
    "model",
    "q_core",
    "q_aux",
    "q_total",
    "q_layers",
    "params_total",
    "params_trainable",
    "est_quantum",
    "est_classical",
    "gamma",
    "gamma_exact",
    "formula_quantum",
];

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| BenchError::Report(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| BenchError::Report(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long-form per-run table. `wall_s` is left empty unless requested.
pub fn runs_csv(runs: &[RunResult], record_wall_time: bool) -> Result<String> {
    let rows: Vec<RunRow> = runs.iter().map(RunRow::from).collect();
    let wall: Vec<f64> = runs.iter().map(|r| r.wall_s).collect();
    run_rows_csv(&rows, record_wall_time.then_some(&wall[..]))
}

fn run_rows_csv(rows: &[RunRow], wall_s: Option<&[f64]>) -> Result<String> {
    csv_string(
        &RUNS_HEADER,
        rows.iter().enumerate().map(|(i, r)| {
            vec![
                r.model.name().to_string(),
                r.seq_len.to_string(),
                r.seed.to_string(),
                r.mae.to_string(),
                r.mse.to_string(),
                r.epochs.to_string(),
                wall_s
                    .and_then(|w| w.get(i))
                    .map(|w| format!("{w:.3}"))
                    .unwrap_or_default(),
            ]
        }),
    )
}

pub fn pivot_csv(p: &Pivot) -> Result<String> {
    let mut header = vec!["seq_len"];
    header.extend(p.models.iter().map(|m| m.name()));
    csv_string(
        &header,
        p.seq_lens.iter().zip(&p.values).map(|(t, row)| {
            let mut r = vec![t.to_string()];
            r.extend(row.iter().map(|&v| opt(v)));
            r
        }),
    )
}

pub fn complexity_csv(rows: &[ComplexityRow]) -> Result<String> {
    csv_string(
        &COMPLEXITY_HEADER,
        rows.iter().map(|r| {
            vec![
                r.model.label().to_string(),
                r.q_core.to_string(),
                r.q_aux.to_string(),
                r.q_total.to_string(),
                r.q_layers.to_string(),
                r.params_total.to_string(),
                r.params_trainable.to_string(),
                r.est_quantum.to_string(),
                r.est_classical.to_string(),
                format_gamma(r.gamma),
                r.gamma.to_string(),
                r.formula_quantum.to_string(),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub model: ModelKind,
    pub seq_len: usize,
    pub seed: u64,
    pub mae: f64,
    pub mse: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
    pub persistence_mae: f64,
    pub persistence_mse: f64,
    pub history: Vec<EpochLog>,
}

impl From<&RunResult> for RunRow {
    fn from(r: &RunResult) -> Self {
        RunRow {
            model: r.model,
            seq_len: r.seq_len,
            seed: r.seed,
            mae: r.test.mae,
            mse: r.test.mse,
            epochs: r.epochs,
            best_epoch: r.best_epoch,
            best_val_loss: r.best_val_loss,
            persistence_mae: r.persistence.mae,
            persistence_mse: r.persistence.mse,
            history: r.history.clone(),
        }
    }
}

/// Run-dependent facts that may differ between identical invocations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub generated_unix_ms: u128,
    pub version: String,
    pub total_wall_s: f64,
    /// Per run, in `runs` order.
    pub run_wall_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: Meta,
    pub config: RunConfig,
    pub metric_space: MetricSpace,
    pub runs: Vec<RunRow>,
    pub failures: Vec<Failure>,
    pub aggregates: Vec<AggregateRow>,
    pub pivot_mae: Pivot,
    pub pivot_mse: Pivot,
    pub complexity: Vec<ComplexityRow>,
}

pub fn build_report(cfg: &RunConfig, sweep: &Sweep, complexity: Vec<ComplexityRow>) -> Report {
    let aggregates = aggregate(cfg, sweep);
    Report {
        meta: Meta {
            generated_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            version: env!("CARGO_PKG_VERSION").to_string(),
            total_wall_s: sweep.total_wall_s,
            run_wall_s: sweep.runs.iter().map(|r| r.wall_s).collect(),
        },
        config: cfg.clone(),
        metric_space: if cfg.train.denormalized_metrics {
            MetricSpace::Original
        } else {
            MetricSpace::Normalized
        },
        runs: sweep.runs.iter().map(RunRow::from).collect(),
        failures: sweep.failures.clone(),
        pivot_mae: pivot(cfg, &aggregates, "mae"),
        pivot_mse: pivot(cfg, &aggregates, "mse"),
        aggregates,
        complexity,
    }
}

fn write(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| BenchError::Report(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Writes runs.csv, pivot_mae.csv, pivot_mse.csv, complexity.csv and
/// report.json into `dir`, returning their paths.
pub fn emit_report(
    dir: &Path,
    cfg: &RunConfig,
    sweep: &Sweep,
    complexity: Vec<ComplexityRow>,
) -> Result<Vec<PathBuf>> {
    write_report(dir, &build_report(cfg, sweep, complexity))
}

/// Writes the tables of an existing report (and the report itself) to `dir`.
pub fn write_report(dir: &Path, report: &Report) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)
        .map_err(|e| BenchError::Report(format!("{}: {e}", dir.display())))?;
    let json =
        serde_json::to_string_pretty(report).map_err(|e| BenchError::Report(e.to_string()))?;
    let wall = report
        .config
        .output
        .record_wall_time
        .then_some(&report.meta.run_wall_s[..]);
    Ok(vec![
        write(dir, "runs.csv", &run_rows_csv(&report.runs, wall)?)?,
        write(dir, "pivot_mae.csv", &pivot_csv(&report.pivot_mae)?)?,
        write(dir, "pivot_mse.csv", &pivot_csv(&report.pivot_mse)?)?,
        write(dir, "complexity.csv", &complexity_csv(&report.complexity)?)?,
        write(dir, "report.json", &(json + "\n"))?,
    ])
}
