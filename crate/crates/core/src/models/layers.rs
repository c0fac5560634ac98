use crate::autodiff::{
    AttentionSpec, Graph, NodeId, ParamId, ParamKind, ParamStore, Result, Tensor,
};
use ndarray::Array2;
use rand::Rng;
use std::f64::consts::PI;

/// Half-width of the uniform initialisation for rotation parameters.
pub const QUANTUM_INIT_BOUND: f64 = PI / 60.0;

pub(crate) fn classical<R: Rng>(
    store: &mut ParamStore,
    name: &str,
    shape: (usize, usize),
    fan_in: usize,
    rng: &mut R,
) -> ParamId {
    let bound = 1.0 / (fan_in as f64).sqrt();
    store.add_uniform(name, ParamKind::Classical, shape, bound, rng)
}

pub(crate) fn quantum<R: Rng>(
    store: &mut ParamStore,
    name: &str,
    shape: (usize, usize),
    rng: &mut R,
) -> ParamId {
    store.add_uniform(name, ParamKind::Quantum, shape, QUANTUM_INIT_BOUND, rng)
}

/// `x · W + b` with `W: in × out`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        n_in: usize,
        n_out: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w: classical(store, &format!("{name}.weight"), (n_in, n_out), n_in, rng),
            b: classical(store, &format!("{name}.bias"), (1, n_out), n_in, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: NodeId) -> Result<NodeId> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(
                format!("{name}.gain"),
                ParamKind::Classical,
                Array2::ones((1, dim)),
            ),
            bias: store.add(
                format!("{name}.bias"),
                ParamKind::Classical,
                Array2::zeros((1, dim)),
            ),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: NodeId) -> Result<NodeId> {
        let (gain, bias) = (g.param(self.gain), g.param(self.bias));
        g.layer_norm(x, gain, bias)
    }
}

/// Standard sinusoidal table: `PE[p, 2i] = sin(p / 10000^{2i/d})`,
/// `PE[p, 2i+1] = cos(p / 10000^{2i/d})`.
pub fn positional_encoding(len: usize, dim: usize) -> Tensor {
    Array2::from_shape_fn((len, dim), |(p, j)| {
        let pair = (j / 2) as f64;
        let angle = p as f64 / 10000f64.powf(2.0 * pair / dim as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Scaled dot-product attention (`1/√d_head`) within each `seg`-row
/// sequence, split into `heads` column groups.
pub fn multi_head_attention(
    g: &mut Graph<'_>,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    heads: usize,
    seg: usize,
    causal: bool,
) -> Result<NodeId> {
    let dh = g.value(q).ncols() / heads.max(1);
    let spec = AttentionSpec {
        seg,
        heads,
        scale: 1.0 / (dh as f64).sqrt(),
        causal,
    };
    g.attention(q, k, v, spec)
}

/// Last row of every `seg`-row sequence (`B × d`).
pub(crate) fn last_rows(g: &mut Graph<'_>, x: NodeId, seg: usize) -> Result<NodeId> {
    let n = g.value(x).nrows();
    let idx: Vec<usize> = (seg - 1..n).step_by(seg).collect();
    g.select_rows(x, &idx)
}

/// Windows stacked into one `(B·T) × 1` column.
pub(crate) fn window_column(g: &mut Graph<'_>, windows: &[&[f64]]) -> NodeId {
    let data: Vec<f64> = windows.iter().flat_map(|w| w.iter().copied()).collect();
    g.input(Array2::from_shape_vec((data.len(), 1), data).expect("column shape"))
}

/// Windows as rows of a `B × T` matrix.
pub(crate) fn window_matrix(g: &mut Graph<'_>, windows: &[&[f64]]) -> NodeId {
    let t = windows.first().map_or(0, |w| w.len());
    let data: Vec<f64> = windows.iter().flat_map(|w| w.iter().copied()).collect();
    g.input(Array2::from_shape_vec((windows.len(), t), data).expect("equal window lengths"))
}

/// `table` repeated `times` times vertically.
pub(crate) fn tile_rows(table: &Tensor, times: usize) -> Tensor {
    let views = vec![table.view(); times];
    ndarray::concatenate(ndarray::Axis(0), &views).expect("same widths")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positional_encoding_closed_form() {
        let pe = positional_encoding(3, 6);
        for j in 0..6 {
            let want = if j % 2 == 0 { 0.0 } else { 1.0 };
            assert_eq!(pe[[0, j]], want);
        }
        assert!((pe[[1, 0]] - 1f64.sin()).abs() < 1e-15);
        assert!((pe[[2, 3]] - (2.0 / 10000f64.powf(2.0 / 6.0)).cos()).abs() < 1e-15);
        assert_ne!(pe.row(1), pe.row(2));
    }
}
