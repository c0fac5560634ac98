use super::layers::{self, window_matrix};
use super::{invalid, Forecaster, ModelConfig, ModelError, QubitLayout};
use crate::autodiff::{Graph, GraphError, NodeId, ParamId, ParamStore};
use crate::statevector::{ring_cnots, AngleSource, CircuitSpec, GateOp};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QlstmGate {
    Forget,
    Input,
    Output,
    Candidate,
}

impl QlstmGate {
    pub const ALL: [QlstmGate; 4] = [
        QlstmGate::Forget,
        QlstmGate::Input,
        QlstmGate::Output,
        QlstmGate::Candidate,
    ];

    fn tag(self) -> &'static str {
        match self {
            QlstmGate::Forget => "f",
            QlstmGate::Input => "i",
            QlstmGate::Output => "o",
            QlstmGate::Candidate => "g",
        }
    }
}

/// `c = f⊙c_prev + i⊙g`, `h = o⊙tanh(c)`.
pub fn lstm_cell_update(
    f: &[f64],
    i: &[f64],
    g: &[f64],
    o: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let c: Vec<f64> = (0..c_prev.len())
        .map(|k| f[k] * c_prev[k] + i[k] * g[k])
        .collect();
    let h = c.iter().zip(o).map(|(c, o)| o * c.tanh()).collect();
    (c, h)
}

/// LSTM whose four gates are variational circuits over `[x_t; h_{t−1}]`.
///
/// Each gate circuit angle-encodes the `hidden + 1` inputs with `RY`, applies
/// `n_quantum_layers` of (CNOT ring, trainable `RY` per qubit) and reads
/// `⟨Z⟩` on the first `hidden` qubits.
#[derive(Debug, Clone)]
pub struct Qlstm {
    config: ModelConfig,
    store: ParamStore,
    circuit: Arc<CircuitSpec>,
    thetas: [ParamId; 4],
    head: layers::Linear,
}

impl Qlstm {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        let (n, layers_q, h) = (config.n_qubits, config.n_quantum_layers, config.hidden);
        if h == 0 || n != h + 1 || layers_q == 0 {
            return Err(invalid(
                config.kind,
                "needs hidden ≥ 1, n_qubits = hidden + 1 and at least one quantum layer",
            ));
        }
        let circuit = Arc::new(
            gate_circuit(n, layers_q, h).map_err(|e| invalid(config.kind, e.to_string()))?,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let thetas = QlstmGate::ALL.map(|gate| {
            layers::quantum(
                &mut store,
                &format!("vqc_{}.theta", gate.tag()),
                (1, n * layers_q),
                &mut rng,
            )
        });
        let head = layers::Linear::new(&mut store, "head", h, 1, &mut rng);
        Ok(Self {
            config,
            store,
            circuit,
            thetas,
            head,
        })
    }

    pub fn circuit(&self) -> &CircuitSpec {
        &self.circuit
    }

    fn theta(&self, gate: QlstmGate) -> ParamId {
        self.thetas[QlstmGate::ALL
            .iter()
            .position(|&g| g == gate)
            .expect("gate listed")]
    }

    /// Activated output of one gate for the current parameters.
    pub fn gate(&self, gate: QlstmGate, x_t: f64, h_prev: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut input = vec![x_t];
        input.extend_from_slice(h_prev);
        let theta = self.store.value(self.theta(gate)).row(0).to_vec();
        let z = self
            .circuit
            .expectations(&input, &theta)
            .map_err(GraphError::from)?;
        let act = |v: f64| match gate {
            QlstmGate::Candidate => v.tanh(),
            _ => 1.0 / (1.0 + (-v).exp()),
        };
        Ok(z.into_iter().map(act).collect())
    }

    /// One recurrence step on plain vectors; returns `(c_t, h_t)`.
    pub fn step(
        &self,
        x_t: f64,
        h_prev: &[f64],
        c_prev: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let f = self.gate(QlstmGate::Forget, x_t, h_prev)?;
        let i = self.gate(QlstmGate::Input, x_t, h_prev)?;
        let o = self.gate(QlstmGate::Output, x_t, h_prev)?;
        let g = self.gate(QlstmGate::Candidate, x_t, h_prev)?;
        Ok(lstm_cell_update(&f, &i, &g, &o, c_prev))
    }
}

fn gate_circuit(
    n: usize,
    n_layers: usize,
    n_measured: usize,
) -> Result<CircuitSpec, crate::statevector::SimError> {
    let mut gates: Vec<GateOp> = (0..n)
        .map(|q| GateOp::ry(q, AngleSource::Input(q)))
        .collect();
    for l in 0..n_layers {
        gates.extend(ring_cnots(n));
        gates.extend((0..n).map(|q| GateOp::ry(q, AngleSource::Param(l * n + q))));
    }
    CircuitSpec::new(n, gates, n, n * n_layers, (0..n_measured).collect())
}

impl Forecaster for Qlstm {
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
        let (h_dim, b) = (self.config.hidden, windows.len());
        let xs = window_matrix(g, windows);
        let thetas = self.thetas.map(|id| g.param(id));
        let mut h = g.input(Array2::zeros((b, h_dim)));
        let mut c = g.input(Array2::zeros((b, h_dim)));
        for t in 0..windows[0].len() {
            let x_t = g.slice_cols(xs, t, t + 1)?;
            let v = g.concat_cols(&[x_t, h])?;
            let mut acts = [v; 4];
            for (k, gate) in QlstmGate::ALL.into_iter().enumerate() {
                let z = g.quantum_expect(&self.circuit, v, thetas[k])?;
                acts[k] = match gate {
                    QlstmGate::Candidate => g.tanh(z),
                    _ => g.sigmoid(z),
                };
            }
            let [f, i, o, gg] = acts;
            let fc = g.mul(f, c)?;
            let ig = g.mul(i, gg)?;
            c = g.add(fc, ig)?;
            let tc = g.tanh(c);
            h = g.mul(o, tc)?;
        }
        self.head.forward(g, h)
    }
}
