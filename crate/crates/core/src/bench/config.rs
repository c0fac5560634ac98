use super::BenchError;
use crate::data::{SynthKind, DEFAULT_COVERAGE, DEFAULT_FRACTIONS};
use crate::models::{ModelConfig, ModelKind, QasaEncoding};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

pub const DEFAULT_SEQ_LENS: [usize; 6] = [4, 8, 12, 16, 32, 64];

/// Optimisation and sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub early_stop_patience: usize,
    /// Disable to train for exactly `max_epochs` (required for an empty validation split).
    pub early_stopping: bool,
    pub weight_decay: f64,
    pub seeds: Vec<u64>,
    pub seq_lens: Vec<usize>,
    pub models: Vec<ModelKind>,
    /// Report test metrics in the original units instead of normalized ones.
    pub denormalized_metrics: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 16,
            max_epochs: 50,
            early_stop_patience: 10,
            early_stopping: true,
            weight_decay: 0.01,
            seeds: (0..5).collect(),
            seq_lens: DEFAULT_SEQ_LENS.to_vec(),
            models: ModelKind::RESULTS_ORDER.to_vec(),
            denormalized_metrics: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SynthShape {
    #[serde(rename = "sinusoid")]
    Sinusoid,
    #[serde(rename = "sinusoid+trend")]
    SinusoidTrend,
    #[serde(rename = "ar1")]
    Ar1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub kind: SynthShape,
    pub length: usize,
    pub noise_sd: f64,
    pub seed: u64,
    /// Sinusoid period in samples.
    #[serde(default = "default_period")]
    pub period: f64,
    /// Trend rise over the whole series.
    #[serde(default = "default_slope")]
    pub slope: f64,
    /// AR(1) coefficient.
    #[serde(default = "default_phi")]
    pub phi: f64,
}

fn default_period() -> f64 {
    SynthKind::DEFAULT_PERIOD
}

fn default_slope() -> f64 {
    1.0
}

fn default_phi() -> f64 {
    0.9
}

impl SyntheticSource {
    pub fn sinusoid(length: usize, noise_sd: f64, seed: u64) -> Self {
        Self {
            kind: SynthShape::Sinusoid,
            length,
            noise_sd,
            seed,
            period: default_period(),
            slope: default_slope(),
            phi: default_phi(),
        }
    }

    pub fn synth_kind(&self) -> SynthKind {
        match self.kind {
            SynthShape::Sinusoid => SynthKind::Sinusoid {
                period: self.period,
            },
            SynthShape::SinusoidTrend => SynthKind::SinusoidTrend {
                period: self.period,
                slope: self.slope,
            },
            SynthShape::Ar1 => SynthKind::Ar1 { phi: self.phi },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Generated series; see [`crate::data::synthesize`].
    Synthetic(SyntheticSource),
    /// Canonical series CSV.
    Series {
        path: PathBuf,
        /// Cell to model; the first cell in the file when absent.
        #[serde(default)]
        square_id: Option<u64>,
        /// Train one model on the windows of every cell.
        #[serde(default)]
        pooled: bool,
    },
    /// Raw Milan-layout files, ingested on the fly.
    Milan {
        inputs: Vec<PathBuf>,
        #[serde(default = "default_coverage")]
        coverage: f64,
        #[serde(default)]
        square_id: Option<u64>,
        #[serde(default)]
        pooled: bool,
    },
}

fn default_coverage() -> f64 {
    DEFAULT_COVERAGE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    #[serde(default = "default_fractions")]
    pub fractions: (f64, f64, f64),
}

fn default_fractions() -> (f64, f64, f64) {
    DEFAULT_FRACTIONS
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic(SyntheticSource::sinusoid(2000, 0.05, 0)),
            fractions: DEFAULT_FRACTIONS,
        }
    }
}

/// Architecture fields to replace in a model's default configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchOverride {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_qubits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_quantum_layers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_model: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_heads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_layers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ff_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qasa_encoding: Option<QasaEncoding>,
}

impl ArchOverride {
    pub fn apply(&self, mut c: ModelConfig) -> ModelConfig {
        let set = |dst: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut c.n_qubits, self.n_qubits);
        set(&mut c.n_quantum_layers, self.n_quantum_layers);
        set(&mut c.hidden, self.hidden);
        set(&mut c.d_model, self.d_model);
        set(&mut c.n_heads, self.n_heads);
        set(&mut c.n_layers, self.n_layers);
        set(&mut c.ff_dim, self.ff_dim);
        if let Some(e) = self.qasa_encoding {
            c.qasa_encoding = e;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Fill the `wall_s` column of runs.csv. Off by default so that the file
    /// is byte-identical across repeated runs; wall times always go to
    /// report.json's `meta` block.
    pub record_wall_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("qseq-out"),
            record_wall_time: false,
        }
    }
}

/// The run configuration document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    /// Per-model architecture overrides keyed by model name.
    pub models: BTreeMap<ModelKind, ArchOverride>,
    pub train: TrainConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Semantic checks beyond the schema. Errors name the offending field as
    /// a JSON pointer.
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |path: &str, why: &str| Err(BenchError::Config(format!("{path}: {why}")));
        let t = &self.train;
        if !(t.lr.is_finite() && t.lr > 0.0) {
            return bad("/train/lr", "must be a positive number");
        }
        if !(t.weight_decay.is_finite() && t.weight_decay >= 0.0) {
            return bad("/train/weight_decay", "must be a nonnegative number");
        }
        if t.batch_size == 0 {
            return bad("/train/batch_size", "must be at least 1");
        }
        if t.max_epochs == 0 {
            return bad("/train/max_epochs", "must be at least 1");
        }
        for (field, empty) in [
            ("seeds", t.seeds.is_empty()),
            ("seq_lens", t.seq_lens.is_empty()),
            ("models", t.models.is_empty()),
        ] {
            if empty {
                return bad(&format!("/train/{field}"), "must not be empty");
            }
        }
        if let Some(i) = t.seq_lens.iter().position(|&l| l == 0) {
            return bad(
                &format!("/train/seq_lens/{i}"),
                "window length must be at least 1",
            );
        }
        if let DataSource::Synthetic(s) = &self.data.source {
            if !(s.noise_sd.is_finite() && s.noise_sd >= 0.0) {
                return bad(
                    "/data/source/synthetic/noise_sd",
                    "must be a nonnegative number",
                );
            }
        }
        if let DataSource::Milan { coverage, .. } = &self.data.source {
            if !(*coverage > 0.0 && *coverage <= 1.0) {
                return bad("/data/source/milan/coverage", "must lie in (0, 1]");
            }
        }
        Ok(())
    }

    pub fn model_config(&self, kind: ModelKind, seq_len: usize, seed: u64) -> ModelConfig {
        let base = ModelConfig::new(kind, seq_len, seed);
        match self.models.get(&kind) {
            Some(o) => o.apply(base),
            None => base,
        }
    }
}
