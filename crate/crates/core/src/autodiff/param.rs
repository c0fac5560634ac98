use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io;
use std::path::Path;
use thiserror::Error;

use super::Tensor;

/// Parameter file layout version written into every saved file.
pub const PARAM_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Classical,
    Quantum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
}

/// Registry of every trainable tensor in a model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor) -> ParamId {
        self.params.push(Parameter {
            name: name.into(),
            kind,
            value,
        });
        ParamId(self.params.len() - 1)
    }

    /// `rows × cols` tensor drawn from `uniform(−bound, bound)`.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        kind: ParamKind,
        shape: (usize, usize),
        bound: f64,
        rng: &mut R,
    ) -> ParamId {
        let value = Array2::from_shape_simple_fn(shape, || rng.random_range(-bound..=bound));
        self.add(name, kind, value)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Number of scalar entries of the given kind.
    pub fn count(&self, kind: ParamKind) -> usize {
        self.params
            .iter()
            .filter(|p| p.kind == kind)
            .map(|p| p.value.len())
            .sum()
    }

    pub fn total(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.value.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_file(&self, model: &str) -> ParamFile {
        ParamFile {
            version: PARAM_FILE_VERSION,
            model: model.to_string(),
            tensors: self
                .params
                .iter()
                .map(|p| NamedTensor {
                    name: p.name.clone(),
                    kind: p.kind,
                    shape: [p.value.nrows(), p.value.ncols()],
                    data: p.value.iter().copied().collect(),
                })
                .collect(),
        }
    }

    /// Overwrites values from `file`; names, kinds and shapes must line up.
    pub fn load_file(&mut self, file: &ParamFile) -> Result<(), ParamFileError> {
        if file.version != PARAM_FILE_VERSION {
            return Err(ParamFileError::Version(file.version));
        }
        if file.tensors.len() != self.params.len() {
            return Err(ParamFileError::TensorCount {
                expected: self.params.len(),
                got: file.tensors.len(),
            });
        }
        for (p, t) in self.params.iter_mut().zip(&file.tensors) {
            let shape = [p.value.nrows(), p.value.ncols()];
            if p.name != t.name || p.kind != t.kind || shape != t.shape {
                return Err(ParamFileError::Mismatch(t.name.clone()));
            }
            p.value = Array2::from_shape_vec((shape[0], shape[1]), t.data.clone())
                .map_err(|_| ParamFileError::Mismatch(t.name.clone()))?;
        }
        Ok(())
    }

    pub fn save(&self, model: &str, path: &Path) -> Result<(), ParamFileError> {
        let text = serde_json::to_string(&self.to_file(model))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(&mut self, path: &Path) -> Result<String, ParamFileError> {
        let file: ParamFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        self.load_file(&file)?;
        Ok(file.model)
    }
}

/// Flat named-tensor document for trained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFile {
    pub version: u32,
    pub model: String,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub kind: ParamKind,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum ParamFileError {
    #[error("unsupported parameter file version {0}")]
    Version(u32),
    #[error("parameter file has {got} tensors, model has {expected}")]
    TensorCount { expected: usize, got: usize },
    #[error("tensor `{0}` does not match the model's layout")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Dense gradient buffers, one per registered parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros(store: &ParamStore) -> Self {
        Self {
            grads: store
                .params
                .iter()
                .map(|p| Array2::zeros(p.value.raw_dim()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: &Tensor) {
        self.grads[id.0] += g;
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.mapv_inplace(|v| v * factor);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }

    pub fn l2_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn census_by_kind() {
        let mut s = ParamStore::new();
        s.add("w", ParamKind::Classical, Array2::zeros((3, 4)));
        s.add("theta", ParamKind::Quantum, Array2::zeros((1, 5)));
        assert_eq!(s.count(ParamKind::Classical), 12);
        assert_eq!(s.count(ParamKind::Quantum), 5);
        assert_eq!(s.total(), 17);
    }

    #[test]
    fn file_round_trip_and_layout_check() {
        let mut s = ParamStore::new();
        s.add("w", ParamKind::Classical, array![[1.0, 2.0], [3.0, 4.5]]);
        s.add("theta", ParamKind::Quantum, array![[0.25, -1.0]]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        s.save("qlstm", &path).unwrap();

        let mut fresh = s.clone();
        fresh.value_mut(ParamId(0)).fill(0.0);
        assert_eq!(fresh.load(&path).unwrap(), "qlstm");
        assert_eq!(fresh, s);

        let mut other = ParamStore::new();
        other.add("w", ParamKind::Classical, Array2::zeros((2, 2)));
        other.add("theta", ParamKind::Quantum, Array2::zeros((1, 3)));
        assert!(matches!(
            other.load(&path),
            Err(ParamFileError::Mismatch(_))
        ));

        let mut file = s.to_file("qlstm");
        file.version = 7;
        assert!(matches!(
            s.clone().load_file(&file),
            Err(ParamFileError::Version(7))
        ));
    }
}
