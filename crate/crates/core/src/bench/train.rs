use super::config::TrainConfig;
use super::metrics::{metrics, predictions, Metrics};
use super::prepare::Prepared;
use super::{BenchError, Result};
use crate::autodiff::{AdamW, AdamWConfig, QuantumGrad};
use crate::models::{batch_loss_and_grad, Forecaster, ModelKind};
use crate::par::Exec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Stream of the run's generator reserved for batch order.
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricSpace {
    Normalized,
    Original,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model: ModelKind,
    pub seq_len: usize,
    pub seed: u64,
    pub epochs: usize,
    /// Epoch whose parameters were kept (the last one without early stopping).
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
    pub test: Metrics,
    pub persistence: Metrics,
    pub space: MetricSpace,
    pub history: Vec<EpochLog>,
    pub wall_s: f64,
}

/// Mini-batch AdamW on the MSE with optional early stopping.
///
/// Each epoch visits the training set in an order drawn from a generator
/// seeded with `seed` on its own stream. With early stopping the parameters of
/// the best validation epoch are restored before the test evaluation; training
/// stops once `early_stop_patience` consecutive epochs fail to improve.
pub fn train(
    model: &mut dyn Forecaster,
    data: &Prepared,
    cfg: &TrainConfig,
    seed: u64,
    exec: Exec,
) -> Result<RunResult> {
    let start = Instant::now();
    if data.train.is_empty() || data.test.is_empty() {
        return Err(BenchError::EmptyDataset);
    }
    let early = cfg.early_stopping;
    if early && data.val.is_empty() {
        return Err(BenchError::Config(
            "early stopping needs a validation split".into(),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(BenchError::Config("batch_size must be at least 1".into()));
    }
    let t = model.config().seq_len;
    if data.train.t != t {
        return Err(BenchError::Config(format!(
            "model expects T={t}, data has T={}",
            data.train.t
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
        model.params(),
    );
    let windows = data.train.windows();
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, crate::autodiff::ParamStore)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let ws: Vec<&[f64]> = batch.iter().map(|&i| windows[i]).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| data.train.targets[i]).collect();
            let (loss, grads) = batch_loss_and_grad(&*model, &ws, &ys, QuantumGrad::Adjoint, exec)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(BenchError::NonFinite {
                    model: model.kind(),
                    epoch,
                    batch: b,
                    lr: cfg.lr,
                    param_norm: model.params().l2_norm(),
                    grad_norm: grads.l2_norm(),
                });
            }
            opt.step(model.params_mut(), &grads);
            total += loss * batch.len() as f64;
        }
        let train_loss = total / order.len() as f64;
        let val_loss = if early {
            Some(metrics(&predictions(&*model, &data.val, exec)?, &data.val.targets)?.mse)
        } else {
            None
        };
        history.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
        if let Some(v) = val_loss {
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, model.params().clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.early_stop_patience {
                    break;
                }
            }
        }
    }

    let epochs = history.len();
    let (best_val_loss, best_epoch) = match best {
        Some((v, e, params)) => {
            *model.params_mut() = params;
            (Some(v), e)
        }
        None => (None, epochs),
    };
    let preds = predictions(&*model, &data.test, exec)?;
    let last: Vec<f64> = data.test.windows().iter().map(|w| w[w.len() - 1]).collect();
    let (test, persistence, space) = if cfg.denormalized_metrics {
        let y = data.denormalize(&data.test, &data.test.targets);
        (
            metrics(&data.denormalize(&data.test, &preds), &y)?,
            metrics(&data.denormalize(&data.test, &last), &y)?,
            MetricSpace::Original,
        )
    } else {
        (
            metrics(&preds, &data.test.targets)?,
            metrics(&last, &data.test.targets)?,
            MetricSpace::Normalized,
        )
    };
    Ok(RunResult {
        model: model.kind(),
        seq_len: t,
        seed,
        epochs,
        best_epoch,
        best_val_loss,
        test,
        persistence,
        space,
        history,
        wall_s: start.elapsed().as_secs_f64(),
    })
}
