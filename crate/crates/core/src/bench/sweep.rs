use super::config::RunConfig;
use super::prepare::{load_series, prepare, Prepared};
use super::train::{train, RunResult};
use super::{BenchError, Result};
use crate::models::{build, ModelKind};
use crate::par::{self, Exec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub model: ModelKind,
    pub seq_len: usize,
    pub seed: u64,
}

/// Every `(model, T, seed)` combination, in configuration order.
pub fn jobs(cfg: &RunConfig) -> Vec<Job> {
    let t = &cfg.train;
    let mut out = Vec::with_capacity(t.models.len() * t.seq_lens.len() * t.seeds.len());
    for &model in &t.models {
        for &seq_len in &t.seq_lens {
            for &seed in &t.seeds {
                out.push(Job {
                    model,
                    seq_len,
                    seed,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub model: ModelKind,
    pub seq_len: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub runs: Vec<RunResult>,
    pub failures: Vec<Failure>,
    pub total_wall_s: f64,
}

impl Sweep {
    pub fn completed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Trains one job on already prepared data.
pub fn run_job(cfg: &RunConfig, job: Job, data: &Prepared, exec: Exec) -> Result<RunResult> {
    let mut model = build(&cfg.model_config(job.model, job.seq_len, job.seed))?;
    train(model.as_mut(), data, &cfg.train, job.seed, exec)
}

/// Runs the whole sweep on `workers` threads.
///
/// Each job runs single-threaded. Results come back in [`jobs`] order
/// whatever the completion order, so one worker and many workers produce
/// identical tables. `on_done` sees each finished job.
pub fn multi_run(
    cfg: &RunConfig,
    workers: usize,
    on_done: &(dyn Fn(Job, &Result<RunResult>) + Sync),
) -> Result<Sweep> {
    if cfg.train.seeds.is_empty() {
        return Err(BenchError::Config("at least one seed is required".into()));
    }
    let start = Instant::now();
    let series = load_series(&cfg.data)?;
    let allow_empty_val = !cfg.train.early_stopping;
    let mut prepared = BTreeMap::new();
    for &t in &cfg.train.seq_lens {
        prepared.insert(t, prepare(&series, &cfg.data, t, allow_empty_val)?);
    }
    let all = jobs(cfg);
    let work = |job: &Job| {
        let r = run_job(cfg, *job, &prepared[&job.seq_len], Exec::Sequential);
        on_done(*job, &r);
        r
    };
    let results = run_pool(workers, &all, work)?;
    let mut sweep = Sweep {
        runs: Vec::new(),
        failures: Vec::new(),
        total_wall_s: 0.0,
    };
    for (job, r) in all.iter().zip(results) {
        match r {
            Ok(run) => sweep.runs.push(run),
            Err(e) => sweep.failures.push(Failure {
                model: job.model,
                seq_len: job.seq_len,
                seed: job.seed,
                error: e.to_string(),
            }),
        }
    }
    sweep.total_wall_s = start.elapsed().as_secs_f64();
    Ok(sweep)
}

fn run_pool<R: Send>(
    workers: usize,
    jobs: &[Job],
    f: impl Fn(&Job) -> R + Sync + Send,
) -> Result<Vec<R>> {
    if workers <= 1 || !Exec::parallel_available() {
        return Ok(par::map(Exec::Sequential, jobs, f));
    }
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| BenchError::Config(format!("worker pool: {e}")))?;
        Ok(pool.install(|| par::map(Exec::Parallel, jobs, f)))
    }
    #[cfg(not(feature = "parallel"))]
    unreachable!("parallel execution unavailable")
}

/// Mean and sample standard deviation over the completed runs of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model: ModelKind,
    pub seq_len: usize,
    pub count: usize,
    pub failed: usize,
    pub mae_mean: Option<f64>,
    pub mae_std: Option<f64>,
    pub mse_mean: Option<f64>,
    pub mse_std: Option<f64>,
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.len() > 1)
        .then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

/// One row per `(model, T)` of the configuration, in configuration order.
pub fn aggregate(cfg: &RunConfig, sweep: &Sweep) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for &model in &cfg.train.models {
        for &seq_len in &cfg.train.seq_lens {
            let runs: Vec<&RunResult> = sweep
                .runs
                .iter()
                .filter(|r| r.model == model && r.seq_len == seq_len)
                .collect();
            let failed = sweep
                .failures
                .iter()
                .filter(|f| f.model == model && f.seq_len == seq_len)
                .count();
            let mae: Vec<f64> = runs.iter().map(|r| r.test.mae).collect();
            let mse: Vec<f64> = runs.iter().map(|r| r.test.mse).collect();
            let (mae_mean, mae_std) = mean_std(&mae);
            let (mse_mean, mse_std) = mean_std(&mse);
            rows.push(AggregateRow {
                model,
                seq_len,
                count: runs.len(),
                failed,
                mae_mean,
                mae_std,
                mse_mean,
                mse_std,
            });
        }
    }
    rows
}

/// Mean metric laid out as rows = window length, columns = model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pivot {
    pub metric: String,
    pub models: Vec<ModelKind>,
    pub seq_lens: Vec<usize>,
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn pivot(cfg: &RunConfig, rows: &[AggregateRow], metric: &str) -> Pivot {
    let pick = |r: &AggregateRow| {
        if metric == "mae" {
            r.mae_mean
        } else {
            r.mse_mean
        }
    };
    let values = cfg
        .train
        .seq_lens
        .iter()
        .map(|&t| {
            cfg.train
                .models
                .iter()
                .map(|&m| {
                    rows.iter()
                        .find(|r| r.model == m && r.seq_len == t)
                        .and_then(pick)
                })
                .collect()
        })
        .collect();
    Pivot {
        metric: metric.to_string(),
        models: cfg.train.models.clone(),
        seq_lens: cfg.train.seq_lens.clone(),
        values,
    }
}
