use super::Result;
use crate::models::{build, count_parameters, ModelConfig, ModelKind};
use serde::{Deserialize, Serialize};

/// Average parameterized gates per qubit per layer in the estimator.
pub const GATES_PER_QUBIT_LAYER: usize = 3;

/// `Q · L · R`.
pub fn estimate_quantum_params(q_total: usize, q_layers: usize, r: usize) -> usize {
    q_total * q_layers * r
}

/// `quantum / classical`, or `quantum / (classical + 1)` when there are no
/// classical parameters.
pub fn gamma(est_quantum: f64, est_classical: f64) -> f64 {
    if est_classical == 0.0 {
        est_quantum / (est_classical + 1.0)
    } else {
        est_quantum / est_classical
    }
}

/// Two decimals with trailing zeros trimmed; below 0.01, one significant
/// digit in `6e-05` form.
pub fn format_gamma(g: f64) -> String {
    if g == 0.0 {
        return "0".into();
    }
    if g.abs() < 0.01 {
        let s = format!("{g:.0e}");
        let (mantissa, exp) = s.split_once('e').expect("exponent form");
        let exp: i32 = exp.parse().expect("integer exponent");
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let s = format!("{g:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// One complexity-table row: exact census plus the `Q·L·R` estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub model: ModelKind,
    pub q_core: usize,
    pub q_aux: usize,
    pub q_total: usize,
    pub q_layers: usize,
    pub params_total: usize,
    pub params_trainable: usize,
    /// Exact count of quantum (circuit) parameters.
    pub est_quantum: usize,
    pub est_classical: usize,
    pub gamma: f64,
    /// `q_total · q_layers · 3`, shown beside the exact count.
    pub formula_quantum: usize,
}

pub fn complexity_row(config: &ModelConfig) -> Result<ComplexityRow> {
    let model = build(config)?;
    let count = count_parameters(model.as_ref());
    let q = model.qubits();
    Ok(ComplexityRow {
        model: config.kind,
        q_core: q.core,
        q_aux: q.aux,
        q_total: q.total(),
        q_layers: q.layers,
        params_total: count.total(),
        params_trainable: count.total(),
        est_quantum: count.quantum,
        est_classical: count.classical,
        gamma: gamma(count.quantum as f64, count.classical as f64),
        formula_quantum: estimate_quantum_params(q.total(), q.layers, GATES_PER_QUBIT_LAYER),
    })
}

/// Rows for default-configured models, in complexity-table order.
pub fn complexity_table(models: &[ModelKind]) -> Result<Vec<ComplexityRow>> {
    complexity_table_with(models, |k| ModelConfig::new(k, 8, 0))
}

pub fn complexity_table_with(
    models: &[ModelKind],
    config: impl Fn(ModelKind) -> ModelConfig,
) -> Result<Vec<ComplexityRow>> {
    ModelKind::ALL
        .into_iter()
        .filter(|k| models.contains(k))
        .map(|k| complexity_row(&config(k)))
        .collect()
}
