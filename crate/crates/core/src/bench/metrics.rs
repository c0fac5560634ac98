use super::{BenchError, Result};
use crate::data::WindowDataset;
use crate::models::{predict_many, Forecaster};
use crate::par::Exec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mse: f64,
}

/// MAE and MSE of paired predictions and targets.
pub fn metrics(preds: &[f64], targets: &[f64]) -> Result<Metrics> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(BenchError::EmptyDataset);
    }
    let n = preds.len() as f64;
    let (abs, sq) = preds
        .iter()
        .zip(targets)
        .fold((0.0, 0.0), |(a, s), (p, y)| {
            (a + (p - y).abs(), s + (p - y) * (p - y))
        });
    Ok(Metrics {
        mae: abs / n,
        mse: sq / n,
    })
}

pub fn predictions(model: &dyn Forecaster, data: &WindowDataset, exec: Exec) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(BenchError::EmptyDataset);
    }
    Ok(predict_many(model, &data.windows(), exec)?)
}

pub fn evaluate(model: &dyn Forecaster, data: &WindowDataset, exec: Exec) -> Result<Metrics> {
    metrics(&predictions(model, data, exec)?, &data.targets)
}

/// Metrics of the last-value predictor `ŷ_{t+1} = x_t`.
pub fn persistence_baseline(data: &WindowDataset) -> Result<Metrics> {
    let last: Vec<f64> = data.windows().iter().map(|w| w[w.len() - 1]).collect();
    metrics(&last, &data.targets)
}
