use super::layers::{self, window_column};
use super::{invalid, Forecaster, ModelConfig, ModelError, QubitLayout};
use crate::autodiff::{Graph, GraphError, NodeId, ParamId, ParamStore, Tensor};
use crate::statevector::{build_ring_variational, AngleSource, CircuitSpec, GateKind, GateOp};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Circuit angles `Θ` (`n_layers × n_qubits`) programmed by additive
/// rank-one updates.
#[derive(Debug, Clone, PartialEq)]
pub struct FastWeightState {
    base: Tensor,
    theta: Tensor,
}

impl FastWeightState {
    pub fn new(base: Tensor) -> Self {
        Self {
            theta: base.clone(),
            base,
        }
    }

    pub fn theta(&self) -> &Tensor {
        &self.theta
    }

    /// Back to the trainable base, as at the start of every window.
    pub fn reset(&mut self) {
        self.theta.assign(&self.base);
    }

    /// `Θ[i][j] ← Θ[i][j] + L[i]·Q[j]`; returns the applied `L ⊗ Q`.
    pub fn step(&mut self, l: &[f64], q: &[f64]) -> Tensor {
        assert_eq!(
            (l.len(), q.len()),
            self.theta.dim(),
            "factor lengths must match Θ"
        );
        let delta = Array2::from_shape_fn(self.theta.raw_dim(), |(i, j)| l[i] * q[j]);
        self.theta += &delta;
        delta
    }
}

/// Fast-weight programmer: a slow network emits `(L, Q)` per step, the
/// circuit angles accumulate `L ⊗ Q`, and the final step's circuit is read out.
///
/// Circuit: `H` on every qubit, `RY` of a trainable lift of `x_t`, then
/// `n_quantum_layers` of (`RY(Θ_{ℓ,i})`, CNOT ring); `⟨Z⟩` on all qubits.
#[derive(Debug, Clone)]
pub struct Qfwp {
    config: ModelConfig,
    store: ParamStore,
    circuit: Arc<CircuitSpec>,
    theta_base: ParamId,
    slow_in: layers::Linear,
    slow_out: layers::Linear,
    lift: layers::Linear,
    head: layers::Linear,
}

impl Qfwp {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        let (n, l, hidden) = (config.n_qubits, config.n_quantum_layers, config.hidden);
        if n == 0 || l == 0 || hidden == 0 {
            return Err(invalid(
                config.kind,
                "n_qubits, n_quantum_layers and hidden must be positive",
            ));
        }
        let mut gates: Vec<GateOp> = (0..n).map(GateOp::h).collect();
        gates.extend((0..n).map(|q| GateOp::ry(q, AngleSource::Input(q))));
        gates.extend(build_ring_variational(n, l, &[GateKind::RY], 0));
        let circuit = CircuitSpec::new(n, gates, n, n * l, (0..n).collect())
            .map_err(|e| invalid(config.kind, e.to_string()))?;

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let theta_base = layers::quantum(&mut store, "theta_base", (l, n), &mut rng);
        let slow_in = layers::Linear::new(&mut store, "slow.hidden", 1, hidden, &mut rng);
        let slow_out = layers::Linear::new(&mut store, "slow.out", hidden, l + n, &mut rng);
        let lift = layers::Linear::new(&mut store, "lift", 1, n, &mut rng);
        let head = layers::Linear::new(&mut store, "head", n, 1, &mut rng);
        Ok(Self {
            config,
            store,
            circuit: Arc::new(circuit),
            theta_base,
            slow_in,
            slow_out,
            lift,
            head,
        })
    }

    pub fn circuit(&self) -> &CircuitSpec {
        &self.circuit
    }

    pub fn theta_base(&self) -> &Tensor {
        self.store.value(self.theta_base)
    }

    /// Size of the slow network's generator layer (`hidden → L + n`).
    pub fn generator_params(&self) -> usize {
        (self.config.hidden + 1) * (self.config.n_quantum_layers + self.config.n_qubits)
    }

    /// `(L, Q)` rows for every row of `xs` (a column node).
    fn factors(
        &self,
        g: &mut Graph<'_>,
        xs: NodeId,
    ) -> Result<(Vec<NodeId>, Vec<NodeId>), GraphError> {
        let (l, n) = (self.config.n_quantum_layers, self.config.n_qubits);
        let hidden = self.slow_in.forward(g, xs)?;
        let hidden = g.tanh(hidden);
        let out = self.slow_out.forward(g, hidden)?;
        let t_len = g.value(xs).nrows();
        let mut ls = Vec::with_capacity(t_len);
        let mut qs = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let row = g.slice_rows(out, t, t + 1)?;
            ls.push(g.slice_cols(row, 0, l)?);
            qs.push(g.slice_cols(row, l, l + n)?);
        }
        Ok((ls, qs))
    }

    /// Slow-network output `(L, Q)` for one scalar input.
    pub fn slow_network(&self, x: f64) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let mut g = Graph::new(&self.store);
        let xs = window_column(&mut g, &[&[x]]);
        let (ls, qs) = self.factors(&mut g, xs)?;
        Ok((
            g.value(ls[0]).row(0).to_vec(),
            g.value(qs[0]).row(0).to_vec(),
        ))
    }

    /// `Θ_0 (base), Θ_1, …, Θ_T` as produced by the training graph, with the
    /// factors applied at each step.
    pub fn theta_trace(
        &self,
        window: &[f64],
    ) -> Result<Vec<(Tensor, Vec<f64>, Vec<f64>)>, ModelError> {
        let mut g = Graph::new(&self.store);
        let xs = window_column(&mut g, &[window]);
        let (ls, qs) = self.factors(&mut g, xs)?;
        let thetas = self.program(&mut g, &ls, &qs)?;
        let mut out = vec![(g.value(thetas[0]).clone(), Vec::new(), Vec::new())];
        for t in 0..window.len() {
            out.push((
                g.value(thetas[t + 1]).clone(),
                g.value(ls[t]).row(0).to_vec(),
                g.value(qs[t]).row(0).to_vec(),
            ));
        }
        Ok(out)
    }

    /// Θ node after each step of one window, starting from the base.
    fn program(
        &self,
        g: &mut Graph<'_>,
        ls: &[NodeId],
        qs: &[NodeId],
    ) -> Result<Vec<NodeId>, GraphError> {
        let mut thetas = vec![g.param(self.theta_base)];
        for (&l, &q) in ls.iter().zip(qs) {
            let delta = g.outer(l, q)?;
            let next = g.add(*thetas.last().expect("base present"), delta)?;
            thetas.push(next);
        }
        Ok(thetas)
    }
}

impl Forecaster for Qfwp {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn qubits(&self) -> QubitLayout {
        QubitLayout {
            core: self.config.n_qubits,
            aux: 0,
            layers: self.config.n_quantum_layers,
        }
    }

    fn forward_batch(&self, g: &mut Graph<'_>, windows: &[&[f64]]) -> Result<NodeId, GraphError> {
        let (l, n) = (self.config.n_quantum_layers, self.config.n_qubits);
        let t_len = windows[0].len();
        let xs = window_column(g, windows);
        let (ls, qs) = self.factors(g, xs)?;
        let mut finals = Vec::with_capacity(windows.len());
        for i in 0..windows.len() {
            let span = i * t_len..(i + 1) * t_len;
            let thetas = self.program(g, &ls[span.clone()], &qs[span])?;
            finals.push(g.reshape(*thetas.last().expect("base present"), 1, l * n)?);
        }
        let theta = g.concat_rows(&finals)?;
        // Only the last step's readout reaches the head, so earlier circuits
        // are not evaluated.
        let last: Vec<usize> = (0..windows.len()).map(|i| (i + 1) * t_len - 1).collect();
        let x_last = g.select_rows(xs, &last)?;
        let angles = self.lift.forward(g, x_last)?;
        let z = g.quantum_expect(&self.circuit, angles, theta)?;
        self.head.forward(g, z)
    }
}
