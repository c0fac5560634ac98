mod config;
mod error;

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand};
use config::{load_config, out_dir, out_file, parse_model};
use error::CliError;
use qseq::bench::{
    complexity_csv, complexity_table_with, emit_report, load_series, multi_run, prepare, train,
    write_report, Job, Report, RunConfig,
};
use qseq::data::{ingest_paths, synthesize, write_series_csv, SynthKind, DEFAULT_COVERAGE};
use qseq::models::{build, ModelKind};
use qseq::par::Exec;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

const TRAIN_DEFAULTS: &str = "Training defaults (overridable in the config's `train` section): \
lr 1e-3 (AdamW, weight decay 0.01), batch size 16, at most 50 epochs, early stopping with patience 10, \
seeds 0,1,2,3,4, window lengths 4,8,12,16,32,64.";

#[derive(Debug, Parser)]
#[command(
    name = "qseq",
    version,
    about = "Hybrid quantum-classical sequence forecasting benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a canonical series CSV from raw Milan-layout activity files.
    Ingest(IngestArgs),
    /// Write a synthetic series in the canonical CSV layout.
    Synth(SynthArgs),
    /// Train one model on one window length and seed.
    #[command(after_help = TRAIN_DEFAULTS)]
    Train(TrainArgs),
    /// Run the full model x window length x seed sweep and write every report.
    #[command(after_help = TRAIN_DEFAULTS)]
    Benchmark(BenchmarkArgs),
    /// Write the parameter census and quantum-to-classical ratios.
    Complexity(ComplexityArgs),
    /// Regenerate the CSV tables from a saved report.json.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output location [default: $QSEQ_OUT_DIR, else the current directory or config]
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Input files, directories or `dir/*.ext` patterns (gzip is detected)
    #[arg(long, required = true, num_args = 1.., value_name = "PATH")]
    input: Vec<PathBuf>,
    /// Minimum fraction of the time span a cell must cover to be kept
    #[arg(long, default_value_t = DEFAULT_COVERAGE)]
    coverage: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value = "sinusoid", value_parser = PossibleValuesParser::new(["sinusoid", "sinusoid+trend", "ar1"]))]
    kind: String,
    #[arg(long, default_value_t = 2000)]
    length: usize,
    #[arg(long, default_value_t = 0.05)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Period in samples (sinusoid kinds)
    #[arg(long, default_value_t = SynthKind::DEFAULT_PERIOD)]
    period: f64,
    /// Trend rise over the whole series (sinusoid+trend)
    #[arg(long, default_value_t = 1.0)]
    slope: f64,
    /// Autoregressive coefficient (ar1)
    #[arg(long, default_value_t = 0.9)]
    phi: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Run configuration (JSON); built-in defaults when absent
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, default_value = "lstm", value_parser = parse_model)]
    model: ModelKind,
    #[arg(long, default_value_t = 8)]
    seq_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Run configuration (JSON); built-in defaults when absent
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Comma-separated models [default: lstm,qasa,qrwkv,qlstm,qfwp8,qfwp10,qfwp12,qfwp14]
    #[arg(long, value_delimiter = ',', value_parser = parse_model)]
    models: Option<Vec<ModelKind>>,
    /// Comma-separated window lengths [default: 4,8,12,16,32,64]
    #[arg(long, value_delimiter = ',')]
    seq_lens: Option<Vec<usize>>,
    /// Comma-separated seeds [default: 0,1,2,3,4]
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Concurrent training runs; each run stays single-threaded
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct ComplexityArgs {
    /// Run configuration whose architecture overrides apply
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Comma-separated models [default: all eight]
    #[arg(long, value_delimiter = ',', value_parser = parse_model)]
    models: Option<Vec<ModelKind>>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// report.json written by `benchmark`
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[command(flatten)]
    out: OutArg,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_one(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Complexity(a) => complexity(a),
        Command::Report(a) => report(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::run(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::run(format!("{}: {e}", path.display())))
}

fn ingest(a: IngestArgs) -> Result<(), CliError> {
    if !(a.coverage > 0.0 && a.coverage <= 1.0) {
        return Err(CliError::usage(format!(
            "--coverage must lie in (0, 1], got {}",
            a.coverage
        )));
    }
    let (series, summary) = ingest_paths(&a.input, a.coverage)?;
    let path = out_file(a.out.out.as_deref(), "series.csv");
    write_series_csv(create(&path)?, &series)?;
    let s = &summary.stats;
    eprintln!(
        "ingested {} file(s): {} lines, {} records, {} skipped, {} malformed",
        summary.files, s.lines, s.records, s.skipped, s.malformed
    );
    for sample in &s.samples {
        eprintln!("  malformed {sample}");
    }
    eprintln!(
        "cells: {} seen, {} kept, {} dropped below coverage {}",
        summary.cells_seen,
        summary.cells_kept,
        summary.cells_dropped(),
        a.coverage
    );
    println!("{}", path.display());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let kind = match a.kind.as_str() {
        "sinusoid" => SynthKind::Sinusoid { period: a.period },
        "sinusoid+trend" => SynthKind::SinusoidTrend {
            period: a.period,
            slope: a.slope,
        },
        _ => SynthKind::Ar1 { phi: a.phi },
    };
    let series = synthesize(kind, a.length, a.noise_sd, a.seed)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let path = out_file(a.out.out.as_deref(), "series.csv");
    write_series_csv(create(&path)?, &[series])?;
    println!("{}", path.display());
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::run(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::run(format!("{}: {e}", path.display())))
}

fn train_one(a: TrainArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref())?;
    if a.seq_len == 0 {
        return Err(CliError::usage("--seq-len must be at least 1"));
    }
    let dir = out_dir(a.out.out.as_deref(), &cfg.output.dir);
    let series = load_series(&cfg.data)?;
    let data = prepare(&series, &cfg.data, a.seq_len, !cfg.train.early_stopping)?;
    let mut model = build(&cfg.model_config(a.model, a.seq_len, a.seed))
        .map_err(|e| CliError::usage(e.to_string()))?;
    let result = train(model.as_mut(), &data, &cfg.train, a.seed, Exec::Sequential)?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::run(format!("{}: {e}", dir.display())))?;
    let stem = format!("{}_t{}_s{}", a.model, a.seq_len, a.seed);
    let run_path = dir.join(format!("{stem}.run.json"));
    let params_path = dir.join(format!("{stem}.params.json"));
    write_json(&run_path, &result)?;
    model
        .params()
        .save(a.model.name(), &params_path)
        .map_err(|e| CliError::run(format!("{}: {e}", params_path.display())))?;
    println!(
        "{} T={} seed={}: test mae {:.6} mse {:.6} (persistence mse {:.6}) after {} epochs",
        a.model,
        a.seq_len,
        a.seed,
        result.test.mae,
        result.test.mse,
        result.persistence.mse,
        result.epochs
    );
    println!("{}\n{}", run_path.display(), params_path.display());
    Ok(())
}

fn apply_overrides(cfg: &mut RunConfig, a: &BenchmarkArgs) -> Result<(), CliError> {
    if let Some(m) = &a.models {
        cfg.train.models = m.clone();
    }
    if let Some(t) = &a.seq_lens {
        cfg.train.seq_lens = t.clone();
    }
    if let Some(s) = &a.seeds {
        cfg.train.seeds = s.clone();
    }
    if a.jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    Ok(cfg.validate()?)
}

fn benchmark(a: BenchmarkArgs) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    apply_overrides(&mut cfg, &a)?;
    let dir = out_dir(a.out.out.as_deref(), &cfg.output.dir);
    let total = cfg.train.models.len() * cfg.train.seq_lens.len() * cfg.train.seeds.len();
    let done = AtomicUsize::new(0);
    let progress = |job: Job, r: &qseq::bench::Result<qseq::bench::RunResult>| {
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        match r {
            Ok(run) => eprintln!(
                "[{n}/{total}] {} T={} seed={}: mse {:.6} after {} epochs",
                job.model, job.seq_len, job.seed, run.test.mse, run.epochs
            ),
            Err(e) => eprintln!(
                "[{n}/{total}] {} T={} seed={}: failed: {e}",
                job.model, job.seq_len, job.seed
            ),
        }
    };
    let sweep = multi_run(&cfg, a.jobs, &progress)?;
    let mut complexity = Vec::new();
    for &k in ModelKind::ALL
        .iter()
        .filter(|k| cfg.train.models.contains(k))
    {
        match complexity_table_with(&[k], |k| cfg.model_config(k, 8, 0)) {
            Ok(rows) => complexity.extend(rows),
            Err(e) => eprintln!("{k}: left out of complexity.csv: {e}"),
        }
    }
    let written = emit_report(&dir, &cfg, &sweep, complexity)?;
    for p in &written {
        println!("{}", p.display());
    }
    if sweep.completed() {
        Ok(())
    } else {
        Err(CliError::run(format!(
            "{} of {total} runs failed",
            sweep.failures.len()
        )))
    }
}

fn complexity(a: ComplexityArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let models = a.models.unwrap_or_else(|| ModelKind::ALL.to_vec());
    let rows = complexity_table_with(&models, |k| cfg.model_config(k, 8, 0))?;
    let path = out_file(a.out.out.as_deref(), "complexity.csv");
    let text = complexity_csv(&rows)?;
    let mut w = create(&path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::run(format!("{}: {e}", path.display())))?;
    println!("{}", path.display());
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.input)
        .map_err(|e| CliError::data(format!("{}: {e}", a.input.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let report: Report = serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::data(format!(
            "{}: invalid report at {}: {}",
            a.input.display(),
            e.path(),
            e.inner()
        ))
    })?;
    let fallback = a.input.parent().map(Path::to_path_buf).unwrap_or_default();
    let dir = out_dir(a.out.out.as_deref(), &fallback);
    for p in write_report(&dir, &report)? {
        println!("{}", p.display());
    }
    Ok(())
}
