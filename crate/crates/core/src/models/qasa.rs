use super::layers::{
    self, last_rows, multi_head_attention, positional_encoding, tile_rows, window_column,
    LayerNorm, Linear,
};
use super::{invalid, Forecaster, ModelConfig, ModelError, QubitLayout};
use crate::autodiff::{Graph, GraphError, NodeId, ParamId, ParamStore};
use crate::statevector::{ring_cnots, AngleSource, CircuitSpec, Encoding, GateOp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// How tokens enter the attention circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QasaEncoding {
    /// Projection to one angle per qubit, applied as `RX(a)` then `RZ(a)`.
    #[default]
    Angle,
    /// The token itself, normalised into the amplitudes.
    Amplitude,
}

#[derive(Debug, Clone, Copy)]
struct EncoderLayer {
    ln_attn: LayerNorm,
    qkv: Linear,
    out: Linear,
    ln_ff: LayerNorm,
    ff_in: Linear,
    ff_out: Linear,
}

/// Transformer forecaster whose first attention block draws Q, K and V from
/// a shared variational circuit.
///
/// The circuit (encoding, CNOT ring, then per layer `RY(θ)·RZ(θ)` on every
/// qubit followed by a ring) is evaluated once per token; the three streams
/// differ only in their classical `n_qubits → d_model` maps.
#[derive(Debug, Clone)]
pub struct Qasa {
    config: ModelConfig,
    store: ParamStore,
    circuit: Arc<CircuitSpec>,
    embed: Linear,
    angles: Option<Linear>,
    theta: ParamId,
    q_map: Linear,
    k_map: Linear,
    v_map: Linear,
    attn_out: Linear,
    ln_q: LayerNorm,
    encoder: Vec<EncoderLayer>,
    ln_final: LayerNorm,
    head: Linear,
}

pub(crate) fn qasa_circuit(
    n: usize,
    n_layers: usize,
    encoding: QasaEncoding,
    d_model: usize,
) -> Result<CircuitSpec, crate::statevector::SimError> {
    let mut gates = Vec::new();
    let n_inputs = match encoding {
        QasaEncoding::Angle => {
            for q in 0..n {
                gates.push(GateOp::rx(q, AngleSource::Input(q)));
                gates.push(GateOp::rz(q, AngleSource::Input(q)));
            }
            n
        }
        QasaEncoding::Amplitude => d_model,
    };
    gates.extend(ring_cnots(n));
    for l in 0..n_layers {
        for q in 0..n {
            let slot = AngleSource::Param(l * n + q);
            gates.push(GateOp::ry(q, slot));
            gates.push(GateOp::rz(q, slot));
        }
        gates.extend(ring_cnots(n));
    }
    let enc = match encoding {
        QasaEncoding::Angle => Encoding::Gates,
        QasaEncoding::Amplitude => Encoding::Amplitude,
    };
    CircuitSpec::with_encoding(n, gates, n_inputs, n * n_layers, (0..n).collect(), enc)
}

impl Qasa {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        let c = &config;
        let (n, d, heads) = (c.n_qubits, c.d_model, c.n_heads);
        if n < 2
            || c.n_quantum_layers == 0
            || d == 0
            || heads == 0
            || d % heads != 0
            || c.ff_dim == 0
        {
            return Err(invalid(
                c.kind,
                "needs n_qubits ≥ 2, n_quantum_layers ≥ 1, ff_dim ≥ 1 and d_model divisible by n_heads",
            ));
        }
        let circuit = qasa_circuit(n, c.n_quantum_layers, c.qasa_encoding, d)
            .map_err(|e| invalid(c.kind, e.to_string()))?;

        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let mut store = ParamStore::new();
        let embed = Linear::new(&mut store, "embed", 1, d, &mut rng);
        let angles = match c.qasa_encoding {
            QasaEncoding::Angle => Some(Linear::new(&mut store, "qattn.angles", d, n, &mut rng)),
            QasaEncoding::Amplitude => None,
        };
        let theta = layers::quantum(
            &mut store,
            "qattn.theta",
            (1, n * c.n_quantum_layers),
            &mut rng,
        );
        let q_map = Linear::new(&mut store, "qattn.q", n, d, &mut rng);
        let k_map = Linear::new(&mut store, "qattn.k", n, d, &mut rng);
        let v_map = Linear::new(&mut store, "qattn.v", n, d, &mut rng);
        let attn_out = Linear::new(&mut store, "qattn.out", d, d, &mut rng);
        let ln_q = LayerNorm::new(&mut store, "qattn.norm", d);
        let encoder = (0..c.n_layers)
            .map(|i| EncoderLayer {
                ln_attn: LayerNorm::new(&mut store, &format!("enc{i}.ln_attn"), d),
                qkv: Linear::new(&mut store, &format!("enc{i}.qkv"), d, 3 * d, &mut rng),
                out: Linear::new(&mut store, &format!("enc{i}.out"), d, d, &mut rng),
                ln_ff: LayerNorm::new(&mut store, &format!("enc{i}.ln_ff"), d),
                ff_in: Linear::new(&mut store, &format!("enc{i}.ff_in"), d, c.ff_dim, &mut rng),
                ff_out: Linear::new(&mut store, &format!("enc{i}.ff_out"), c.ff_dim, d, &mut rng),
            })
            .collect();
        let ln_final = LayerNorm::new(&mut store, "ln_final", d);
        let head = Linear::new(&mut store, "head", d, 1, &mut rng);
        Ok(Self {
            config,
            store,
            circuit: Arc::new(circuit),
            embed,
            angles,
            theta,
            q_map,
            k_map,
            v_map,
            attn_out,
            ln_q,
            encoder,
            ln_final,
            head,
        })
    }

    pub fn circuit(&self) -> &CircuitSpec {
        &self.circuit
    }

    /// Token embeddings, windows stacked by row: linear lift of each value
    /// plus the sinusoidal table.
    pub fn embed(&self, g: &mut Graph<'_>, windows: &[&[f64]]) -> Result<NodeId, GraphError> {
        let xs = window_column(g, windows);
        let lifted = self.embed.forward(g, xs)?;
        let pe = positional_encoding(windows[0].len(), self.config.d_model);
        let pe = g.input(tile_rows(&pe, windows.len()));
        g.add(lifted, pe)
    }

    /// `⟨Z⟩` of every qubit for every token (`T × n_qubits`).
    pub fn quantum_features(
        &self,
        g: &mut Graph<'_>,
        tokens: NodeId,
    ) -> Result<NodeId, GraphError> {
        let inputs = match &self.angles {
            Some(proj) => proj.forward(g, tokens)?,
            None => tokens,
        };
        let theta = g.param(self.theta);
        g.quantum_expect(&self.circuit, inputs, theta)
    }

    /// Quantum attention block over `seg`-token sequences; also returns the
    /// attention node, whose weights are read with [`Graph::attention_weights`].
    pub fn quantum_attention(
        &self,
        g: &mut Graph<'_>,
        tokens: NodeId,
        seg: usize,
    ) -> Result<(NodeId, NodeId), GraphError> {
        let z = self.quantum_features(g, tokens)?;
        let q = self.q_map.forward(g, z)?;
        let k = self.k_map.forward(g, z)?;
        let v = self.v_map.forward(g, z)?;
        let attn = multi_head_attention(g, q, k, v, self.config.n_heads, seg, false)?;
        let out = self.attn_out.forward(g, attn)?;
        let res = g.add(tokens, out)?;
        Ok((self.ln_q.forward(g, res)?, attn))
    }
}

impl Forecaster for Qasa {
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
            core: self.config.n_qubits - 1,
            aux: 1,
            layers: self.config.n_quantum_layers,
        }
    }

    fn forward_batch(&self, g: &mut Graph<'_>, windows: &[&[f64]]) -> Result<NodeId, GraphError> {
        let (d, seg) = (self.config.d_model, windows[0].len());
        let tokens = self.embed(g, windows)?;
        let (mut x, _) = self.quantum_attention(g, tokens, seg)?;
        for layer in &self.encoder {
            let h = layer.ln_attn.forward(g, x)?;
            let qkv = layer.qkv.forward(g, h)?;
            let q = g.slice_cols(qkv, 0, d)?;
            let k = g.slice_cols(qkv, d, 2 * d)?;
            let v = g.slice_cols(qkv, 2 * d, 3 * d)?;
            let a = multi_head_attention(g, q, k, v, self.config.n_heads, seg, false)?;
            let a = layer.out.forward(g, a)?;
            x = g.add(x, a)?;
            let h = layer.ln_ff.forward(g, x)?;
            let f = layer.ff_in.forward(g, h)?;
            let f = g.relu(f);
            let f = layer.ff_out.forward(g, f)?;
            x = g.add(x, f)?;
        }
        let x = self.ln_final.forward(g, x)?;
        let last = last_rows(g, x, seg)?;
        self.head.forward(g, last)
    }
}
