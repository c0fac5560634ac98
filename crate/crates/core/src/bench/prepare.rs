use super::config::{DataConfig, DataSource};
use super::{BenchError, Result};
use crate::data::{self, pool, Normalizer, Series, Splits, WindowDataset};
use std::collections::BTreeMap;
use std::fs::File;

/// Loads every series the data section refers to.
pub fn load_series(cfg: &DataConfig) -> Result<Vec<Series>> {
    Ok(match &cfg.source {
        DataSource::Synthetic(s) => vec![data::synthesize(
            s.synth_kind(),
            s.length,
            s.noise_sd,
            s.seed,
        )?],
        DataSource::Series { path, .. } => {
            let file = File::open(path).map_err(|source| data::DataError::Io {
                path: path.display().to_string(),
                source,
            })?;
            data::read_series_csv(file)?
        }
        DataSource::Milan {
            inputs, coverage, ..
        } => data::ingest_paths(inputs, *coverage)?.0,
    })
}

/// Train/val/test windows at one window length, with the per-cell
/// normalizers that produced them.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: WindowDataset,
    pub val: WindowDataset,
    pub test: WindowDataset,
    pub normalizers: BTreeMap<u64, Normalizer>,
}

impl Prepared {
    /// Maps normalized values of `dataset` samples back to original units.
    pub fn denormalize(&self, dataset: &WindowDataset, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(&dataset.square_id)
            .map(|(&v, id)| self.normalizers[id].inverse(v))
            .collect()
    }
}

fn selection(cfg: &DataConfig) -> (Option<u64>, bool) {
    match &cfg.source {
        DataSource::Synthetic(_) => (None, false),
        DataSource::Series {
            square_id, pooled, ..
        }
        | DataSource::Milan {
            square_id, pooled, ..
        } => (*square_id, *pooled),
    }
}

/// Splits and windows the configured cell, or every cell when pooled.
pub fn prepare(
    series: &[Series],
    cfg: &DataConfig,
    t: usize,
    allow_empty_val: bool,
) -> Result<Prepared> {
    let (square_id, pooled) = selection(cfg);
    let chosen: Vec<&Series> = if pooled {
        series.iter().collect()
    } else {
        let s = match square_id {
            Some(id) => series
                .iter()
                .find(|s| s.square_id == id)
                .ok_or_else(|| BenchError::Config(format!("cell {id} not found in the data")))?,
            None => series
                .first()
                .ok_or_else(|| BenchError::Config("no series to train on".into()))?,
        };
        vec![s]
    };
    let mut normalizers = BTreeMap::new();
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for s in chosen {
        let sp = Splits::build(s, cfg.fractions, t, allow_empty_val)?;
        normalizers.insert(s.square_id, sp.normalizer);
        train.push(sp.train);
        val.push(sp.val);
        test.push(sp.test);
    }
    Ok(Prepared {
        train: pool(train)?,
        val: pool(val)?,
        test: pool(test)?,
        normalizers,
    })
}
