//! The five forecasters. Each maps a `T`-length window of scalars to a
//! one-step-ahead scalar prediction.

mod layers;
mod lstm;
mod qasa;
mod qfwp;
mod qlstm;
mod qrwkv;

pub use layers::{multi_head_attention, positional_encoding, QUANTUM_INIT_BOUND};
pub use lstm::Lstm;
pub use qasa::{Qasa, QasaEncoding};
pub use qfwp::{FastWeightState, Qfwp};
pub use qlstm::{lstm_cell_update, Qlstm, QlstmGate};
pub use qrwkv::Qrwkv;

use crate::autodiff::{Gradients, Graph, GraphError, NodeId, ParamKind, ParamStore, QuantumGrad};
use crate::par::{self, Exec};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Qfwp8,
    Qfwp10,
    Qfwp12,
    Qfwp14,
    Qasa,
    Qlstm,
    Qrwkv,
    Lstm,
}

impl ModelKind {
    /// Complexity-table row order.
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Qfwp8,
        ModelKind::Qfwp10,
        ModelKind::Qfwp12,
        ModelKind::Qfwp14,
        ModelKind::Qasa,
        ModelKind::Qlstm,
        ModelKind::Qrwkv,
        ModelKind::Lstm,
    ];

    /// Results-table column order.
    pub const RESULTS_ORDER: [ModelKind; 8] = [
        ModelKind::Lstm,
        ModelKind::Qasa,
        ModelKind::Qrwkv,
        ModelKind::Qlstm,
        ModelKind::Qfwp8,
        ModelKind::Qfwp10,
        ModelKind::Qfwp12,
        ModelKind::Qfwp14,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Qlstm => "qlstm",
            ModelKind::Qasa => "qasa",
            ModelKind::Qrwkv => "qrwkv",
            ModelKind::Qfwp8 => "qfwp8",
            ModelKind::Qfwp10 => "qfwp10",
            ModelKind::Qfwp12 => "qfwp12",
            ModelKind::Qfwp14 => "qfwp14",
        }
    }

    /// Label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Lstm => "Baseline (LSTM)",
            ModelKind::Qlstm => "QLSTM",
            ModelKind::Qasa => "QASA",
            ModelKind::Qrwkv => "QRWKV",
            ModelKind::Qfwp8 => "QFWP(8Q)",
            ModelKind::Qfwp10 => "QFWP(10Q)",
            ModelKind::Qfwp12 => "QFWP(12Q)",
            ModelKind::Qfwp14 => "QFWP(14Q)",
        }
    }

    pub fn valid_names() -> String {
        let names: Vec<_> = ModelKind::RESULTS_ORDER.iter().map(|k| k.name()).collect();
        names.join(", ")
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown model `{0}`; valid names: {valid}", valid = ModelKind::valid_names())]
pub struct UnknownModel(pub String);

impl FromStr for ModelKind {
    type Err = UnknownModel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| UnknownModel(s.to_string()))
    }
}

/// Architecture hyperparameters. Fields a model does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub seq_len: usize,
    pub seed: u64,
    /// Circuit width, auxiliary qubits included.
    pub n_qubits: usize,
    pub n_quantum_layers: usize,
    /// LSTM hidden units; QFWP slow-network hidden width.
    pub hidden: usize,
    pub d_model: usize,
    pub n_heads: usize,
    /// Encoder layers (QASA), mixing blocks (QRWKV), recurrent layers (LSTM).
    pub n_layers: usize,
    pub ff_dim: usize,
    pub qasa_encoding: QasaEncoding,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, seq_len: usize, seed: u64) -> Self {
        let base = ModelConfig {
            kind,
            seq_len,
            seed,
            n_qubits: 0,
            n_quantum_layers: 0,
            hidden: 0,
            d_model: 0,
            n_heads: 0,
            n_layers: 0,
            ff_dim: 0,
            qasa_encoding: QasaEncoding::Angle,
        };
        match kind {
            ModelKind::Lstm => ModelConfig {
                hidden: 64,
                n_layers: 1,
                ..base
            },
            ModelKind::Qlstm => ModelConfig {
                n_qubits: 5,
                n_quantum_layers: 5,
                hidden: 4,
                ..base
            },
            ModelKind::Qasa => ModelConfig {
                n_qubits: 9,
                n_quantum_layers: 4,
                d_model: 128,
                n_heads: 4,
                n_layers: 4,
                ff_dim: 256,
                ..base
            },
            ModelKind::Qrwkv => ModelConfig {
                n_qubits: 4,
                n_quantum_layers: 2,
                d_model: 128,
                n_layers: 2,
                ff_dim: 512,
                ..base
            },
            ModelKind::Qfwp8 | ModelKind::Qfwp10 | ModelKind::Qfwp12 | ModelKind::Qfwp14 => {
                let n = match kind {
                    ModelKind::Qfwp8 => 8,
                    ModelKind::Qfwp10 => 10,
                    ModelKind::Qfwp12 => 12,
                    _ => 14,
                };
                ModelConfig {
                    n_qubits: n,
                    n_quantum_layers: 2,
                    hidden: n,
                    ..base
                }
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid {kind} configuration: {reason}")]
    Config { kind: ModelKind, reason: String },
    #[error("window has {got} values, model expects {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("batch has {inputs} windows but {targets} targets")]
    BatchMismatch { inputs: usize, targets: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub(crate) fn invalid(kind: ModelKind, reason: impl Into<String>) -> ModelError {
    ModelError::Config {
        kind,
        reason: reason.into(),
    }
}

/// Qubit layout reported in the complexity table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QubitLayout {
    pub core: usize,
    pub aux: usize,
    pub layers: usize,
}

impl QubitLayout {
    pub fn total(&self) -> usize {
        self.core + self.aux
    }
}

pub trait Forecaster: Send + Sync {
    fn config(&self) -> &ModelConfig;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn qubits(&self) -> QubitLayout;

    /// Records the forward pass for equal-length windows and returns the
    /// `B × 1` predictions, one row per window.
    fn forward_batch(&self, g: &mut Graph<'_>, windows: &[&[f64]]) -> Result<NodeId, GraphError>;

    /// Single-window form of [`Forecaster::forward_batch`] (`1 × 1`).
    fn forward(&self, g: &mut Graph<'_>, window: &[f64]) -> Result<NodeId, GraphError> {
        self.forward_batch(g, &[window])
    }

    fn kind(&self) -> ModelKind {
        self.config().kind
    }

    fn predict(&self, window: &[f64]) -> Result<f64, ModelError> {
        check_window(self, window)?;
        let mut g = Graph::new(self.params());
        let out = self.forward(&mut g, window)?;
        Ok(g.value(out)[[0, 0]])
    }
}

fn check_window<M: Forecaster + ?Sized>(model: &M, window: &[f64]) -> Result<(), ModelError> {
    let expected = model.config().seq_len;
    if window.len() != expected {
        return Err(ModelError::WindowLength {
            expected,
            got: window.len(),
        });
    }
    Ok(())
}

pub fn build(config: &ModelConfig) -> Result<Box<dyn Forecaster>, ModelError> {
    if config.seq_len == 0 {
        return Err(invalid(config.kind, "seq_len must be at least 1"));
    }
    Ok(match config.kind {
        ModelKind::Lstm => Box::new(Lstm::new(config.clone())?),
        ModelKind::Qlstm => Box::new(Qlstm::new(config.clone())?),
        ModelKind::Qasa => Box::new(Qasa::new(config.clone())?),
        ModelKind::Qrwkv => Box::new(Qrwkv::new(config.clone())?),
        ModelKind::Qfwp8 | ModelKind::Qfwp10 | ModelKind::Qfwp12 | ModelKind::Qfwp14 => {
            Box::new(Qfwp::new(config.clone())?)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub quantum: usize,
    pub classical: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.quantum + self.classical
    }
}

pub fn count_parameters<M: Forecaster + ?Sized>(model: &M) -> ParamCount {
    ParamCount {
        quantum: model.params().count(ParamKind::Quantum),
        classical: model.params().count(ParamKind::Classical),
    }
}

/// Samples per gradient chunk. Fixed so that the summation order, and hence
/// every bit of the result, is independent of the thread count.
pub const GRAD_CHUNK: usize = 8;

/// Windows per forward graph when predicting.
pub const EVAL_CHUNK: usize = 64;

/// Mean squared error over a batch and its gradient.
pub fn batch_loss_and_grad<M: Forecaster + ?Sized>(
    model: &M,
    windows: &[&[f64]],
    targets: &[f64],
    quantum_grad: QuantumGrad,
    exec: Exec,
) -> Result<(f64, Gradients), ModelError> {
    if windows.len() != targets.len() {
        return Err(ModelError::BatchMismatch {
            inputs: windows.len(),
            targets: targets.len(),
        });
    }
    if windows.is_empty() {
        return Err(GraphError::EmptyBatch.into());
    }
    for w in windows {
        check_window(model, w)?;
    }
    let scale = 1.0 / windows.len() as f64;
    let pairs: Vec<(&[f64], f64)> = windows
        .iter()
        .copied()
        .zip(targets.iter().copied())
        .collect();
    let partials = par::map_chunks(
        exec,
        &pairs,
        GRAD_CHUNK,
        |chunk| -> Result<(f64, Gradients), GraphError> {
            let (ws, ys): (Vec<&[f64]>, Vec<f64>) = chunk.iter().copied().unzip();
            let mut grads = Gradients::zeros(model.params());
            let mut g = Graph::with_quantum_grad(model.params(), quantum_grad);
            let pred = model.forward_batch(&mut g, &ws)?;
            let target = Array2::from_shape_vec((ys.len(), 1), ys).expect("column shape");
            let l = g.mse_loss(pred, &target)?;
            let n = chunk.len() as f64;
            g.backward_into(l, n * scale, &mut grads)?;
            Ok((g.value(l)[[0, 0]] * n, grads))
        },
    );
    let mut total = 0.0;
    let mut grads = Gradients::zeros(model.params());
    for part in partials {
        let (l, g) = part?;
        total += l;
        grads.add_assign(&g);
    }
    Ok((total * scale, grads))
}

/// Predictions for many windows, evaluated [`EVAL_CHUNK`] at a time.
pub fn predict_many<M: Forecaster + ?Sized>(
    model: &M,
    windows: &[&[f64]],
    exec: Exec,
) -> Result<Vec<f64>, ModelError> {
    for w in windows {
        check_window(model, w)?;
    }
    let parts = par::map_chunks(
        exec,
        windows,
        EVAL_CHUNK,
        |chunk| -> Result<Vec<f64>, GraphError> {
            let mut g = Graph::new(model.params());
            let out = model.forward_batch(&mut g, chunk)?;
            Ok(g.value(out).column(0).to_vec())
        },
    );
    let mut preds = Vec::with_capacity(windows.len());
    for p in parts {
        preds.extend(p?);
    }
    Ok(preds)
}
