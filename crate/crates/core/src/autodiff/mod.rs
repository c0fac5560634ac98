//! Tape-based reverse-mode differentiation over `f64` matrices.
//!
//! A [`Graph`] records nodes in creation order, which is already a topological
//! order, so [`Graph::backward`] is a single reverse sweep. Parameters are read
//! by reference from a [`ParamStore`]; their gradients come back as a
//! [`Gradients`] buffer aligned with the store.
//!
//! Shapes are explicit everywhere. The only broadcasting ops are the named
//! row-vector forms [`Graph::add_row`] and [`Graph::mul_row`].

mod check;
mod optim;
mod param;

pub use check::{finite_difference_check, FdReport, FdSelection};
pub use optim::{AdamW, AdamWConfig};
pub use param::{
    Gradients, NamedTensor, ParamFile, ParamFileError, ParamId, ParamKind, ParamStore, Parameter,
    PARAM_FILE_VERSION,
};

use crate::statevector::{
    jacobian_parameter_shift, vjp_adjoint_batch, CircuitSpec, SimError, StateBatch,
};
use ndarray::{s, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

pub type Tensor = Array2<f64>;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: range {start}..{end} out of bounds for extent {extent}")]
    Range {
        op: &'static str,
        start: usize,
        end: usize,
        extent: usize,
    },
    #[error("mse_loss on an empty batch")]
    EmptyBatch,
    #[error("backward requires a 1×1 loss node, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error(transparent)]
    Quantum(#[from] SimError),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// How quantum expectation nodes differentiate their circuits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantumGrad {
    /// Two-term shift rule per gate occurrence (full Jacobian, then contracted).
    #[default]
    ParameterShift,
    /// One adjoint sweep per row; same result, far fewer circuit passes.
    Adjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Layout of a fused [`Graph::attention`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionSpec {
    /// Rows per independent sequence.
    pub seg: usize,
    pub heads: usize,
    /// Multiplier on the logits, usually `1/√(d/heads)`.
    pub scale: f64,
    pub causal: bool,
}

fn check_segments(op: &'static str, dims: (usize, usize), seg: usize) -> Result<()> {
    if seg == 0 || !dims.0.is_multiple_of(seg) {
        return Err(GraphError::Shape {
            op,
            left: dims,
            right: (seg, dims.1),
        });
    }
    Ok(())
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    MatMulNT(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Softmax(NodeId),
    CausalMask(NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceCols(NodeId, usize),
    SliceRows(NodeId, usize),
    SelectRows(NodeId, Vec<usize>),
    ShiftRows(NodeId, usize),
    Outer(NodeId, NodeId),
    Reshape(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Tensor,
        rstd: Vec<f64>,
    },
    Wkv {
        k: NodeId,
        v: NodeId,
        decay: NodeId,
        bonus: NodeId,
        seg: usize,
    },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        spec: AttentionSpec,
        /// Row-stochastic weights, one `seg × seg` matrix per (sequence, head).
        probs: Vec<Tensor>,
    },
    Quantum {
        circuit: Arc<CircuitSpec>,
        inputs: NodeId,
        params: NodeId,
        /// Output states kept for the adjoint sweep.
        states: Option<StateBatch>,
    },
    Mse(NodeId, Tensor),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Result of a backward sweep.
pub struct Backward {
    pub params: Gradients,
    nodes: Vec<Option<Tensor>>,
}

impl Backward {
    /// Gradient reaching a leaf node created with [`Graph::input_var`].
    pub fn node(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].as_ref()
    }
}

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
    quantum_grad: QuantumGrad,
}

fn shape(t: &Tensor) -> (usize, usize) {
    (t.nrows(), t.ncols())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self::with_quantum_grad(store, QuantumGrad::default())
    }

    pub fn with_quantum_grad(store: &'a ParamStore, quantum_grad: QuantumGrad) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            quantum_grad,
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.store.value(*p),
            _ => unreachable!("only parameter nodes borrow their value"),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value: Some(value),
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Constant leaf; no gradient is tracked for it.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf whose gradient is reported by [`Backward::node`].
    pub fn input_var(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            requires_grad: true,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(id, n);
        n
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (l, r) = (shape(self.value(a)), shape(self.value(b)));
        if l != r {
            return Err(GraphError::Shape {
                op,
                left: l,
                right: r,
            });
        }
        Ok(())
    }

    fn row_shape(&self, op: &'static str, a: NodeId, row: NodeId) -> Result<()> {
        let (l, r) = (shape(self.value(a)), shape(self.value(row)));
        if r != (1, l.1) {
            return Err(GraphError::Shape {
                op,
                left: l,
                right: r,
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.nrows() {
            return Err(GraphError::Shape {
                op: "matmul",
                left: shape(va),
                right: shape(vb),
            });
        }
        let out = va.dot(vb);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.ncols() {
            return Err(GraphError::Shape {
                op: "matmul_nt",
                left: shape(va),
                right: shape(vb),
            });
        }
        let out = va.dot(&vb.t());
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMulNT(a, b), rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let out = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// Adds a `1×n` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.row_shape("add_row", a, row)?;
        let out = self.value(a) + &self.value(row).row(0);
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    /// Multiplies every row of `a` elementwise by a `1×n` row.
    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.row_shape("mul_row", a, row)?;
        let out = self.value(a) * &self.value(row).row(0);
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(out, Op::MulRow(a, row), rg))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let out = self.value(a) * factor;
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, factor), rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).mapv(sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).mapv(f64::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).mapv(|v| v.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    /// Row-wise softmax, computed after subtracting each row's maximum.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let out = softmax_rows(self.value(a));
        let rg = self.rg(a);
        self.push(out, Op::Softmax(a), rg)
    }

    /// Sets entries above the diagonal of a square matrix to `−∞`.
    pub fn causal_mask(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        if v.nrows() != v.ncols() {
            return Err(GraphError::Shape {
                op: "causal_mask",
                left: shape(v),
                right: shape(v),
            });
        }
        let mut out = v.clone();
        for ((i, j), x) in out.indexed_iter_mut() {
            if j > i {
                *x = f64::NEG_INFINITY;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::CausalMask(a), rg))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = self.value(parts[0]).nrows();
        for &p in parts {
            if self.value(p).nrows() != rows {
                return Err(GraphError::Shape {
                    op: "concat_cols",
                    left: shape(self.value(parts[0])),
                    right: shape(self.value(p)),
                });
            }
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let v = self.value(a);
        if start >= end || end > v.ncols() {
            return Err(GraphError::Range {
                op: "slice_cols",
                start,
                end,
                extent: v.ncols(),
            });
        }
        let out = v.slice(s![.., start..end]).to_owned();
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceCols(a, start), rg))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let v = self.value(a);
        if start >= end || end > v.nrows() {
            return Err(GraphError::Range {
                op: "slice_rows",
                start,
                end,
                extent: v.nrows(),
            });
        }
        let out = v.slice(s![start..end, ..]).to_owned();
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceRows(a, start), rg))
    }

    /// Stacks nodes with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let cols = self.value(parts[0]).ncols();
        for &p in parts {
            if self.value(p).ncols() != cols {
                return Err(GraphError::Shape {
                    op: "concat_rows",
                    left: shape(self.value(parts[0])),
                    right: shape(self.value(p)),
                });
            }
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("column counts checked");
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Gathers the listed rows (repeats allowed) in order.
    pub fn select_rows(&mut self, a: NodeId, rows: &[usize]) -> Result<NodeId> {
        let v = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= v.nrows()) {
            return Err(GraphError::Range {
                op: "select_rows",
                start: bad,
                end: bad + 1,
                extent: v.nrows(),
            });
        }
        let out = v.select(Axis(0), rows);
        let rg = self.rg(a);
        Ok(self.push(out, Op::SelectRows(a, rows.to_vec()), rg))
    }

    /// Row `t` of the output is row `t−1` of `a`; row 0 is zero.
    pub fn shift_rows(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).nrows().max(1);
        self.shift_rows_in(a, n)
            .expect("one segment always divides")
    }

    /// [`Graph::shift_rows`] applied independently to consecutive blocks of
    /// `seg` rows.
    pub fn shift_rows_in(&mut self, a: NodeId, seg: usize) -> Result<NodeId> {
        let v = self.value(a);
        let n = v.nrows();
        check_segments("shift_rows", shape(v), seg)?;
        let mut out = Array2::zeros(v.raw_dim());
        for start in (0..n).step_by(seg) {
            if seg > 1 {
                out.slice_mut(s![start + 1..start + seg, ..])
                    .assign(&v.slice(s![start..start + seg - 1, ..]));
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::ShiftRows(a, seg), rg))
    }

    /// Outer product of two row vectors: `(1×m, 1×n) → m×n`.
    pub fn outer(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.nrows() != 1 || vb.nrows() != 1 {
            return Err(GraphError::Shape {
                op: "outer",
                left: shape(va),
                right: shape(vb),
            });
        }
        let (m, n) = (va.ncols(), vb.ncols());
        let out = Array2::from_shape_fn((m, n), |(i, j)| va[[0, i]] * vb[[0, j]]);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Outer(a, b), rg))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let v = self.value(a);
        if v.len() != rows * cols {
            return Err(GraphError::Shape {
                op: "reshape",
                left: shape(v),
                right: (rows, cols),
            });
        }
        let data: Vec<f64> = v.iter().copied().collect();
        let out = Array2::from_shape_vec((rows, cols), data).expect("length checked");
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Per-row normalization followed by an elementwise affine map.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        self.row_shape("layer_norm", x, gain)?;
        self.row_shape("layer_norm", x, bias)?;
        let v = self.value(x);
        let n = v.ncols() as f64;
        let mut xhat = v.clone();
        let mut rstd = Vec::with_capacity(v.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let r = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|x| (x - mean) * r);
            rstd.push(r);
        }
        let out = &xhat * &self.value(gain).row(0) + &self.value(bias).row(0);
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Causal per-channel weighted average with exponential decay.
    ///
    /// For position `t` and channel `c`, with `w = exp(decay)`:
    /// `s_τ = k_τ − (t−1−τ)·w` for `τ < t`, `s_t = k_t + bonus`, and the output is
    /// `Σ_τ softmax(s)_τ · v_τ`.
    pub fn wkv(&mut self, k: NodeId, v: NodeId, decay: NodeId, bonus: NodeId) -> Result<NodeId> {
        let n = self.value(k).nrows().max(1);
        self.wkv_in(k, v, decay, bonus, n)
    }

    /// [`Graph::wkv`] over consecutive blocks of `seg` rows, each its own sequence.
    pub fn wkv_in(
        &mut self,
        k: NodeId,
        v: NodeId,
        decay: NodeId,
        bonus: NodeId,
        seg: usize,
    ) -> Result<NodeId> {
        self.same_shape("wkv", k, v)?;
        self.row_shape("wkv", k, decay)?;
        self.row_shape("wkv", k, bonus)?;
        let (vk, vv) = (self.value(k), self.value(v));
        check_segments("wkv", shape(vk), seg)?;
        let w = self.value(decay).mapv(f64::exp);
        let u = self.value(bonus);
        let (rows, ch) = (vk.nrows(), vk.ncols());
        let mut out = Array2::zeros((rows, ch));
        let mut scores = vec![0.0; seg];
        for start in (0..rows).step_by(seg) {
            let kb = vk.slice(s![start..start + seg, ..]);
            for c in 0..ch {
                for t in 0..seg {
                    let p = wkv_weights(&kb, w[[0, c]], u[[0, c]], t, c, &mut scores);
                    out[[start + t, c]] = (0..=t).map(|tau| p[tau] * vv[[start + tau, c]]).sum();
                }
            }
        }
        let rg = [k, v, decay, bonus].iter().any(|&n| self.rg(n));
        Ok(self.push(
            out,
            Op::Wkv {
                k,
                v,
                decay,
                bonus,
                seg,
            },
            rg,
        ))
    }

    /// Multi-head dot-product attention within consecutive blocks of
    /// `spec.seg` rows: for each block and head,
    /// `softmax(scale · Q Kᵀ [causal mask]) V`, heads concatenated by column.
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        spec: AttentionSpec,
    ) -> Result<NodeId> {
        self.same_shape("attention", q, k)?;
        self.same_shape("attention", q, v)?;
        let (vq, vk, vv) = (self.value(q), self.value(k), self.value(v));
        let (rows, d) = shape(vq);
        check_segments("attention", (rows, d), spec.seg)?;
        if spec.heads == 0 || d % spec.heads != 0 {
            return Err(GraphError::Shape {
                op: "attention",
                left: (rows, d),
                right: (spec.heads, spec.heads),
            });
        }
        let (seg, dh) = (spec.seg, d / spec.heads);
        let mut out = Array2::zeros((rows, d));
        let mut probs = Vec::with_capacity(rows / seg * spec.heads);
        for start in (0..rows).step_by(seg) {
            for h in 0..spec.heads {
                let block = s![start..start + seg, h * dh..(h + 1) * dh];
                let mut p = vq.slice(block).dot(&vk.slice(block).t()) * spec.scale;
                if spec.causal {
                    for ((i, j), x) in p.indexed_iter_mut() {
                        if j > i {
                            *x = f64::NEG_INFINITY;
                        }
                    }
                }
                let p = softmax_rows(&p);
                out.slice_mut(block).assign(&p.dot(&vv.slice(block)));
                probs.push(p);
            }
        }
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                spec,
                probs,
            },
            rg,
        ))
    }

    /// Weights of an [`Graph::attention`] node, ordered by block then head.
    pub fn attention_weights(&self, id: NodeId) -> Option<&[Tensor]> {
        match &self.nodes[id.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Pauli-Z expectations of `circuit`, one output row per input row.
    ///
    /// `params` is either a single `1×P` row shared by every input row or one
    /// row per input row.
    pub fn quantum_expect(
        &mut self,
        circuit: &Arc<CircuitSpec>,
        inputs: NodeId,
        params: NodeId,
    ) -> Result<NodeId> {
        let (vi, vp) = (self.value(inputs), self.value(params));
        let rows = vi.nrows();
        if vi.ncols() != circuit.n_input_slots()
            || vp.ncols() != circuit.n_param_slots()
            || (vp.nrows() != 1 && vp.nrows() != rows)
        {
            return Err(GraphError::Shape {
                op: "quantum_expect",
                left: shape(vi),
                right: shape(vp),
            });
        }
        let rg = self.rg(inputs) || self.rg(params);
        let keep = rg && self.quantum_grad == QuantumGrad::Adjoint;
        let batch = circuit.run_batch(vi.view(), vp.view())?;
        let out = batch.expect_z(circuit.measured())?;
        let states = keep.then_some(batch);
        Ok(self.push(
            out,
            Op::Quantum {
                circuit: Arc::clone(circuit),
                inputs,
                params,
                states,
            },
            rg,
        ))
    }

    /// `(1/N) Σ (pred − target)²` over all `N` entries.
    pub fn mse_loss(&mut self, pred: NodeId, target: &Tensor) -> Result<NodeId> {
        let v = self.value(pred);
        if v.is_empty() {
            return Err(GraphError::EmptyBatch);
        }
        if shape(v) != shape(target) {
            return Err(GraphError::Shape {
                op: "mse_loss",
                left: shape(v),
                right: shape(target),
            });
        }
        let n = v.len() as f64;
        let loss = Zip::from(v)
            .and(target)
            .fold(0.0, |acc, &p, &t| acc + (p - t) * (p - t))
            / n;
        let rg = self.rg(pred);
        Ok(self.push(
            Array2::from_elem((1, 1), loss),
            Op::Mse(pred, target.clone()),
            rg,
        ))
    }

    /// Reverse sweep from a `1×1` node.
    pub fn backward(&self, loss: NodeId) -> Result<Backward> {
        let mut params = Gradients::zeros(self.store);
        let nodes = self.sweep(loss, 1.0, &mut params)?;
        Ok(Backward { params, nodes })
    }

    /// Adds `scale · ∂loss/∂θ` into `grads` without materialising a fresh buffer.
    pub fn backward_into(&self, loss: NodeId, scale: f64, grads: &mut Gradients) -> Result<()> {
        self.sweep(loss, scale, grads).map(|_| ())
    }

    fn sweep(
        &self,
        loss: NodeId,
        seed: f64,
        params: &mut Gradients,
    ) -> Result<Vec<Option<Tensor>>> {
        let lv = self.value(loss);
        if shape(lv) != (1, 1) {
            return Err(GraphError::NonScalarLoss(shape(lv)));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::from_elem((1, 1), seed));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::Param(p) => {
                    params.accumulate(*p, &g);
                }
                _ => self.backward_op(&node.op, NodeId(i), &g, &mut grads)?,
            }
        }
        Ok(grads)
    }

    fn acc(&self, grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
        if !self.rg(id) {
            return;
        }
        match &mut grads[id.0] {
            Some(existing) => *existing += &g,
            slot => *slot = Some(g),
        }
    }

    fn backward_op(
        &self,
        op: &Op,
        me: NodeId,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let out = || self.value(me);
        match op {
            Op::Leaf | Op::Param(_) => unreachable!(),
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    self.acc(grads, *a, g.dot(&self.value(*b).t()));
                }
                if self.rg(*b) {
                    self.acc(grads, *b, self.value(*a).t().dot(g));
                }
            }
            Op::MatMulNT(a, b) => {
                if self.rg(*a) {
                    self.acc(grads, *a, g.dot(self.value(*b)));
                }
                if self.rg(*b) {
                    self.acc(grads, *b, g.t().dot(self.value(*a)));
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    self.acc(grads, *a, g * self.value(*b));
                }
                if self.rg(*b) {
                    self.acc(grads, *b, g * self.value(*a));
                }
            }
            Op::AddRow(a, row) => {
                self.acc(grads, *a, g.clone());
                if self.rg(*row) {
                    self.acc(grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::MulRow(a, row) => {
                if self.rg(*a) {
                    self.acc(grads, *a, g * &self.value(*row).row(0));
                }
                if self.rg(*row) {
                    let prod = g * self.value(*a);
                    self.acc(grads, *row, prod.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Scale(a, f) => self.acc(grads, *a, g * *f),
            Op::Sigmoid(a) => {
                let y = out();
                self.acc(
                    grads,
                    *a,
                    Zip::from(g).and(y).map_collect(|&g, &y| g * y * (1.0 - y)),
                );
            }
            Op::Tanh(a) => {
                let y = out();
                self.acc(
                    grads,
                    *a,
                    Zip::from(g).and(y).map_collect(|&g, &y| g * (1.0 - y * y)),
                );
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                self.acc(
                    grads,
                    *a,
                    Zip::from(g)
                        .and(x)
                        .map_collect(|&g, &x| if x > 0.0 { g } else { 0.0 }),
                );
            }
            Op::Softmax(a) => {
                let y = out();
                let mut dx = g * y;
                for (mut row, yrow) in dx.rows_mut().into_iter().zip(y.rows()) {
                    let dot = row.sum();
                    Zip::from(&mut row)
                        .and(&yrow)
                        .for_each(|d, &y| *d -= y * dot);
                }
                self.acc(grads, *a, dx);
            }
            Op::CausalMask(a) => {
                let mut dx = g.clone();
                for ((i, j), x) in dx.indexed_iter_mut() {
                    if j > i {
                        *x = 0.0;
                    }
                }
                self.acc(grads, *a, dx);
            }
            Op::ConcatCols(parts) => {
                let mut col = 0;
                for &p in parts {
                    let w = self.value(p).ncols();
                    self.acc(grads, p, g.slice(s![.., col..col + w]).to_owned());
                    col += w;
                }
            }
            Op::SliceCols(a, start) => {
                let mut dx = Array2::zeros(self.value(*a).raw_dim());
                dx.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                self.acc(grads, *a, dx);
            }
            Op::SliceRows(a, start) => {
                let mut dx = Array2::zeros(self.value(*a).raw_dim());
                dx.slice_mut(s![*start..*start + g.nrows(), ..]).assign(g);
                self.acc(grads, *a, dx);
            }
            Op::ShiftRows(a, seg) => {
                let mut dx = Array2::zeros(g.raw_dim());
                for start in (0..g.nrows()).step_by(*seg) {
                    if *seg > 1 {
                        dx.slice_mut(s![start..start + seg - 1, ..])
                            .assign(&g.slice(s![start + 1..start + seg, ..]));
                    }
                }
                self.acc(grads, *a, dx);
            }
            Op::ConcatRows(parts) => {
                let mut row = 0;
                for &p in parts {
                    let h = self.value(p).nrows();
                    self.acc(grads, p, g.slice(s![row..row + h, ..]).to_owned());
                    row += h;
                }
            }
            Op::SelectRows(a, rows) => {
                let mut dx = Array2::zeros(self.value(*a).raw_dim());
                for (i, &r) in rows.iter().enumerate() {
                    let mut dst = dx.row_mut(r);
                    dst += &g.row(i);
                }
                self.acc(grads, *a, dx);
            }
            Op::Attention {
                q,
                k,
                v,
                spec,
                probs,
            } => {
                let (vq, vk, vv) = (self.value(*q), self.value(*k), self.value(*v));
                let (rows, d) = shape(vq);
                let (seg, dh) = (spec.seg, d / spec.heads);
                let mut dq = Array2::zeros((rows, d));
                let mut dk = Array2::zeros((rows, d));
                let mut dv = Array2::zeros((rows, d));
                let mut pi = probs.iter();
                for start in (0..rows).step_by(seg) {
                    for h in 0..spec.heads {
                        let p = pi.next().expect("one matrix per block and head");
                        let block = s![start..start + seg, h * dh..(h + 1) * dh];
                        let go = g.slice(block);
                        dv.slice_mut(block).assign(&p.t().dot(&go));
                        let mut ds = go.dot(&vv.slice(block).t());
                        for (mut drow, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                            let dot = drow.dot(&prow);
                            Zip::from(&mut drow)
                                .and(&prow)
                                .for_each(|x, &p| *x = p * (*x - dot) * spec.scale);
                        }
                        dq.slice_mut(block).assign(&ds.dot(&vk.slice(block)));
                        dk.slice_mut(block).assign(&ds.t().dot(&vq.slice(block)));
                    }
                }
                self.acc(grads, *q, dq);
                self.acc(grads, *k, dk);
                self.acc(grads, *v, dv);
            }
            Op::Outer(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    self.acc(grads, *a, vb.dot(&g.t()));
                }
                if self.rg(*b) {
                    self.acc(grads, *b, va.dot(g));
                }
            }
            Op::Reshape(a) => {
                let v = self.value(*a);
                let data: Vec<f64> = g.iter().copied().collect();
                let dx = Array2::from_shape_vec(v.raw_dim(), data).expect("same length");
                self.acc(grads, *a, dx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                if self.rg(*gain) {
                    let dg = (g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.acc(grads, *gain, dg);
                }
                if self.rg(*bias) {
                    self.acc(grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if self.rg(*x) {
                    let dxhat = g * &self.value(*gain).row(0);
                    let n = g.ncols() as f64;
                    let mut dx = Array2::zeros(g.raw_dim());
                    for r in 0..g.nrows() {
                        let dh = dxhat.row(r);
                        let xh = xhat.row(r);
                        let sum_d = dh.sum();
                        let sum_dx = dh.dot(&xh);
                        let mut row = dx.row_mut(r);
                        Zip::from(&mut row)
                            .and(&dh)
                            .and(&xh)
                            .for_each(|o, &d, &h| *o = rstd[r] / n * (n * d - sum_d - h * sum_dx));
                    }
                    self.acc(grads, *x, dx);
                }
            }
            Op::Wkv {
                k,
                v,
                decay,
                bonus,
                seg,
            } => {
                let (vk, vv) = (self.value(*k), self.value(*v));
                let w = self.value(*decay).mapv(f64::exp);
                let u = self.value(*bonus);
                let y = out();
                let (rows, ch) = (vk.nrows(), vk.ncols());
                let mut dk = Array2::zeros((rows, ch));
                let mut dv = Array2::zeros((rows, ch));
                let mut dw = Array2::zeros((1, ch));
                let mut du = Array2::zeros((1, ch));
                let mut scores = vec![0.0; *seg];
                for b in (0..rows).step_by(*seg) {
                    let kb = vk.slice(s![b..b + seg, ..]);
                    for c in 0..ch {
                        for t in 0..*seg {
                            let gy = g[[b + t, c]];
                            if gy == 0.0 {
                                continue;
                            }
                            let p = wkv_weights(&kb, w[[0, c]], u[[0, c]], t, c, &mut scores);
                            for tau in 0..=t {
                                dv[[b + tau, c]] += gy * p[tau];
                                let ds = gy * p[tau] * (vv[[b + tau, c]] - y[[b + t, c]]);
                                dk[[b + tau, c]] += ds;
                                if tau < t {
                                    dw[[0, c]] -= ds * (t - 1 - tau) as f64 * w[[0, c]];
                                } else {
                                    du[[0, c]] += ds;
                                }
                            }
                        }
                    }
                }
                self.acc(grads, *k, dk);
                self.acc(grads, *v, dv);
                self.acc(grads, *decay, dw);
                self.acc(grads, *bonus, du);
            }
            Op::Quantum {
                circuit,
                inputs,
                params: pnode,
                states,
            } => {
                let (vi, vp) = (self.value(*inputs), self.value(*pnode));
                let (din, dp) = match self.quantum_grad {
                    QuantumGrad::Adjoint => {
                        let output = match states {
                            Some(st) => st.clone(),
                            None => circuit.run_batch(vi.view(), vp.view())?,
                        };
                        vjp_adjoint_batch(circuit, vi.view(), vp.view(), output, g.view())?
                    }
                    QuantumGrad::ParameterShift => {
                        let mut din = Array2::zeros(vi.raw_dim());
                        let mut dp = Array2::zeros(vp.raw_dim());
                        for r in 0..vi.nrows() {
                            let weights = g.row(r).to_owned();
                            if weights.iter().all(|&w| w == 0.0) {
                                continue;
                            }
                            let pr = if vp.nrows() == 1 { 0 } else { r };
                            let jac = jacobian_parameter_shift(
                                circuit,
                                &vi.row(r).to_vec(),
                                &vp.row(pr).to_vec(),
                            )?;
                            din.row_mut(r)
                                .zip_mut_with(&jac.inputs.t().dot(&weights), |d, v| *d += v);
                            dp.row_mut(pr)
                                .zip_mut_with(&jac.params.t().dot(&weights), |d, v| *d += v);
                        }
                        (din, dp)
                    }
                };
                self.acc(grads, *inputs, din);
                self.acc(grads, *pnode, dp);
            }
            Op::Mse(pred, target) => {
                let p = self.value(*pred);
                let scale = 2.0 * g[[0, 0]] / p.len() as f64;
                self.acc(grads, *pred, (p - target) * scale);
            }
        }
        Ok(())
    }
}

/// Softmax weights over `τ ≤ t` for one channel of the decayed average.
fn wkv_weights<'s>(
    k: &ndarray::ArrayView2<'_, f64>,
    w: f64,
    u: f64,
    t: usize,
    c: usize,
    scores: &'s mut [f64],
) -> &'s [f64] {
    for tau in 0..t {
        scores[tau] = k[[tau, c]] - (t - 1 - tau) as f64 * w;
    }
    scores[t] = k[[t, c]] + u;
    let p = &mut scores[..=t];
    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in p.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in p.iter_mut() {
        *s /= sum;
    }
    p
}
