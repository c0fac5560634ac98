use super::layers::{self, last_rows, window_column, LayerNorm, Linear};
use super::{invalid, Forecaster, ModelConfig, ModelError, QubitLayout};
use crate::autodiff::{AttentionSpec, Graph, GraphError, NodeId, ParamId, ParamKind, ParamStore};
use crate::statevector::{build_ring_variational, AngleSource, CircuitSpec, GateKind, GateOp};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[derive(Debug, Clone, Copy)]
struct TimeMix {
    mu_k: ParamId,
    mu_v: ParamId,
    mu_r: ParamId,
    key: Linear,
    value: Linear,
    receptance: Linear,
    decay: ParamId,
    bonus: ParamId,
    out: Linear,
}

#[derive(Debug, Clone, Copy)]
struct ChannelMix {
    mu_k: ParamId,
    mu_r: ParamId,
    key: Linear,
    value: Linear,
    receptance: Linear,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    ln_time: LayerNorm,
    time: TimeMix,
    ln_channel: LayerNorm,
    channel: ChannelMix,
}

/// RWKV backbone with a variational circuit producing the hidden state that
/// feeds a causal key/value read-out.
///
/// After the mixing blocks, a token-shifted receptance projection gives four
/// angles per step; the circuit (`RY` encoding, then per layer `RY`, `RZ` on
/// every qubit and a CNOT ring) turns them into `h_t = ⟨Z⟩`, and `q_t`, `k_t`,
/// `v_t` are linear maps of `h_t`.
#[derive(Debug, Clone)]
pub struct Qrwkv {
    config: ModelConfig,
    store: ParamStore,
    circuit: Arc<CircuitSpec>,
    embed: Linear,
    ln_in: LayerNorm,
    blocks: Vec<Block>,
    ln_out: LayerNorm,
    mu_q: ParamId,
    angles: Linear,
    theta: ParamId,
    q_map: Linear,
    k_map: Linear,
    v_map: Linear,
    head: Linear,
}

fn mix_param(store: &mut ParamStore, name: &str, d: usize) -> ParamId {
    store.add(name, ParamKind::Classical, Array2::from_elem((1, d), 0.5))
}

/// `xx + (x − xx)⊙μ` with `xx` the previous token of the same sequence
/// (zero before the first).
fn token_shift(
    g: &mut Graph<'_>,
    x: NodeId,
    mu: ParamId,
    seg: usize,
) -> Result<NodeId, GraphError> {
    let prev = g.shift_rows_in(x, seg)?;
    let diff = g.sub(x, prev)?;
    let mu = g.param(mu);
    let scaled = g.mul_row(diff, mu)?;
    g.add(prev, scaled)
}

/// `Σ_τ α_{t,τ} v_τ` with causal `α_{t,·} = softmax_τ(⟨q_t, k_τ⟩)`, per
/// `seg`-row sequence; the weights are on the returned node.
pub(crate) fn causal_attend(
    g: &mut Graph<'_>,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    seg: usize,
) -> Result<NodeId, GraphError> {
    let spec = AttentionSpec {
        seg,
        heads: 1,
        scale: 1.0,
        causal: true,
    };
    g.attention(q, k, v, spec)
}

impl Qrwkv {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        let c = &config;
        let (n, d, ff) = (c.n_qubits, c.d_model, c.ff_dim);
        if n == 0 || c.n_quantum_layers == 0 || d == 0 || ff == 0 {
            return Err(invalid(
                c.kind,
                "n_qubits, n_quantum_layers, d_model and ff_dim must be positive",
            ));
        }
        let mut gates: Vec<GateOp> = (0..n)
            .map(|q| GateOp::ry(q, AngleSource::Input(q)))
            .collect();
        gates.extend(build_ring_variational(
            n,
            c.n_quantum_layers,
            &[GateKind::RY, GateKind::RZ],
            0,
        ));
        let circuit = CircuitSpec::new(n, gates, n, 2 * n * c.n_quantum_layers, (0..n).collect())
            .map_err(|e| invalid(c.kind, e.to_string()))?;

        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let mut store = ParamStore::new();
        let embed = Linear::new(&mut store, "embed", 1, d, &mut rng);
        let ln_in = LayerNorm::new(&mut store, "ln_in", d);
        let mut blocks = Vec::with_capacity(c.n_layers);
        for i in 0..c.n_layers {
            let p = |s: &str| format!("block{i}.{s}");
            blocks.push(Block {
                ln_time: LayerNorm::new(&mut store, &p("ln_time"), d),
                time: TimeMix {
                    mu_k: mix_param(&mut store, &p("time.mu_k"), d),
                    mu_v: mix_param(&mut store, &p("time.mu_v"), d),
                    mu_r: mix_param(&mut store, &p("time.mu_r"), d),
                    key: Linear::new(&mut store, &p("time.key"), d, d, &mut rng),
                    value: Linear::new(&mut store, &p("time.value"), d, d, &mut rng),
                    receptance: Linear::new(&mut store, &p("time.receptance"), d, d, &mut rng),
                    decay: layers::classical(&mut store, &p("time.decay"), (1, d), 1, &mut rng),
                    bonus: layers::classical(&mut store, &p("time.bonus"), (1, d), 1, &mut rng),
                    out: Linear::new(&mut store, &p("time.out"), d, d, &mut rng),
                },
                ln_channel: LayerNorm::new(&mut store, &p("ln_channel"), d),
                channel: ChannelMix {
                    mu_k: mix_param(&mut store, &p("channel.mu_k"), d),
                    mu_r: mix_param(&mut store, &p("channel.mu_r"), d),
                    key: Linear::new(&mut store, &p("channel.key"), d, ff, &mut rng),
                    value: Linear::new(&mut store, &p("channel.value"), ff, d, &mut rng),
                    receptance: Linear::new(&mut store, &p("channel.receptance"), d, d, &mut rng),
                },
            });
        }
        let ln_out = LayerNorm::new(&mut store, "ln_out", d);
        let mu_q = mix_param(&mut store, "quantum.mu_r", d);
        let angles = Linear::new(&mut store, "quantum.angles", d, n, &mut rng);
        let theta = layers::quantum(
            &mut store,
            "quantum.theta",
            (1, 2 * n * c.n_quantum_layers),
            &mut rng,
        );
        let q_map = Linear::new(&mut store, "readout.q", n, n, &mut rng);
        let k_map = Linear::new(&mut store, "readout.k", n, n, &mut rng);
        let v_map = Linear::new(&mut store, "readout.v", n, n, &mut rng);
        let head = Linear::new(&mut store, "head", n, 1, &mut rng);
        Ok(Self {
            config,
            store,
            circuit: Arc::new(circuit),
            embed,
            ln_in,
            blocks,
            ln_out,
            mu_q,
            angles,
            theta,
            q_map,
            k_map,
            v_map,
            head,
        })
    }

    pub fn circuit(&self) -> &CircuitSpec {
        &self.circuit
    }

    fn time_mix(
        &self,
        g: &mut Graph<'_>,
        tm: &TimeMix,
        x: NodeId,
        seg: usize,
    ) -> Result<NodeId, GraphError> {
        let xk = token_shift(g, x, tm.mu_k, seg)?;
        let xv = token_shift(g, x, tm.mu_v, seg)?;
        let xr = token_shift(g, x, tm.mu_r, seg)?;
        let k = tm.key.forward(g, xk)?;
        let v = tm.value.forward(g, xv)?;
        let r = tm.receptance.forward(g, xr)?;
        let r = g.sigmoid(r);
        let (decay, bonus) = (g.param(tm.decay), g.param(tm.bonus));
        let wkv = g.wkv_in(k, v, decay, bonus, seg)?;
        let gated = g.mul(r, wkv)?;
        tm.out.forward(g, gated)
    }

    fn channel_mix(
        &self,
        g: &mut Graph<'_>,
        cm: &ChannelMix,
        x: NodeId,
        seg: usize,
    ) -> Result<NodeId, GraphError> {
        let xk = token_shift(g, x, cm.mu_k, seg)?;
        let xr = token_shift(g, x, cm.mu_r, seg)?;
        let k = cm.key.forward(g, xk)?;
        let k = g.relu(k);
        let k2 = g.mul(k, k)?;
        let kv = cm.value.forward(g, k2)?;
        let r = cm.receptance.forward(g, xr)?;
        let r = g.sigmoid(r);
        g.mul(r, kv)
    }

    /// Circuit read-out `h_t` for every step of every window, stacked by
    /// row (`B·T × n_qubits`).
    pub fn hidden(&self, g: &mut Graph<'_>, windows: &[&[f64]]) -> Result<NodeId, GraphError> {
        let seg = windows[0].len();
        let xs = window_column(g, windows);
        let x = self.embed.forward(g, xs)?;
        let mut x = self.ln_in.forward(g, x)?;
        for b in &self.blocks {
            let h = b.ln_time.forward(g, x)?;
            let t = self.time_mix(g, &b.time, h, seg)?;
            x = g.add(x, t)?;
            let h = b.ln_channel.forward(g, x)?;
            let c = self.channel_mix(g, &b.channel, h, seg)?;
            x = g.add(x, c)?;
        }
        let x = self.ln_out.forward(g, x)?;
        let xr = token_shift(g, x, self.mu_q, seg)?;
        let angles = self.angles.forward(g, xr)?;
        let theta = g.param(self.theta);
        g.quantum_expect(&self.circuit, angles, theta)
    }

    /// Causal read-out over `h` for `seg`-step sequences.
    pub fn attend(&self, g: &mut Graph<'_>, h: NodeId, seg: usize) -> Result<NodeId, GraphError> {
        let q = self.q_map.forward(g, h)?;
        let k = self.k_map.forward(g, h)?;
        let v = self.v_map.forward(g, h)?;
        causal_attend(g, q, k, v, seg)
    }
}

impl Forecaster for Qrwkv {
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
        let seg = windows[0].len();
        let h = self.hidden(g, windows)?;
        let o = self.attend(g, h, seg)?;
        let last = last_rows(g, o, seg)?;
        self.head.forward(g, last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{count_parameters, ModelKind};
    use rand::Rng;

    fn small() -> ModelConfig {
        let mut cfg = ModelConfig::new(ModelKind::Qrwkv, 5, 3);
        cfg.d_model = 8;
        cfg.ff_dim = 16;
        cfg
    }

    #[test]
    fn quantum_census_is_16() {
        let m = Qrwkv::new(ModelConfig::new(ModelKind::Qrwkv, 8, 0)).unwrap();
        assert_eq!(count_parameters(&m).quantum, 16);
        assert_eq!(
            m.qubits(),
            QubitLayout {
                core: 4,
                aux: 0,
                layers: 2
            }
        );
    }

    #[test]
    fn zero_angles_and_params_read_all_ones() {
        let m = Qrwkv::new(small()).unwrap();
        let z = m.circuit().expectations(&[0.0; 4], &[0.0; 16]).unwrap();
        assert_eq!(z, vec![1.0; 4]);
    }

    #[test]
    fn hidden_is_bounded_and_weights_are_causal_distributions() {
        let m = Qrwkv::new(small()).unwrap();
        let mut g = Graph::new(m.params());
        let h = m.hidden(&mut g, &[&[0.1, 0.7, 0.3, 0.9, 0.5]]).unwrap();
        assert!(g.value(h).iter().all(|v| (-1.0..=1.0).contains(v)));
        let o = m.attend(&mut g, h, 5).unwrap();
        let a = &g.attention_weights(o).unwrap()[0];
        for t in 0..5 {
            assert!((a.row(t).sum() - 1.0).abs() < 1e-9);
            for tau in 0..5 {
                assert!(a[[t, tau]] >= 0.0);
                if tau > t {
                    assert_eq!(a[[t, tau]], 0.0);
                }
            }
        }
    }

    fn loop_oracle(q: &Array2<f64>, k: &Array2<f64>, v: &Array2<f64>, t: usize) -> Vec<f64> {
        let scores: Vec<f64> = (0..=t)
            .map(|tau| (0..q.ncols()).map(|j| q[[t, j]] * k[[tau, j]]).sum())
            .collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
        let z: f64 = e.iter().sum();
        (0..v.ncols())
            .map(|j| (0..=t).map(|tau| e[tau] / z * v[[tau, j]]).sum())
            .collect()
    }

    #[test]
    fn causal_attend_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut rand = |r, c| Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0));
        let (q, k, v) = (rand(3, 4), rand(3, 4), rand(3, 4));
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let (qn, kn, vn) = (g.input(q.clone()), g.input(k.clone()), g.input(v.clone()));
        let o = causal_attend(&mut g, qn, kn, vn, 3).unwrap();
        assert_eq!(g.attention_weights(o).unwrap()[0][[0, 0]], 1.0);
        for t in 0..3 {
            for (j, want) in loop_oracle(&q, &k, &v, t).into_iter().enumerate() {
                assert!((g.value(o)[[t, j]] - want).abs() < 1e-12);
            }
        }
        // Equal keys give uniform weights.
        let same = g.input(Array2::from_elem((3, 4), 0.3));
        let o = causal_attend(&mut g, qn, same, vn, 3).unwrap();
        let alpha = &g.attention_weights(o).unwrap()[0];
        for t in 0..3 {
            for tau in 0..=t {
                assert!((alpha[[t, tau]] - 1.0 / (t + 1) as f64).abs() < 1e-15);
            }
        }
    }
}
