use super::layers::{self, window_column};
use super::{invalid, Forecaster, ModelConfig, ModelError, QubitLayout};
use crate::autodiff::{Graph, GraphError, NodeId, ParamId, ParamStore};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
struct Cell {
    w_ih: ParamId,
    w_hh: ParamId,
    b_ih: ParamId,
    b_hh: ParamId,
}

/// Stacked LSTM with separate input-side and hidden-side biases and gate
/// order `(i, f, g, o)`, followed by a linear head on the last hidden state.
#[derive(Debug, Clone)]
pub struct Lstm {
    config: ModelConfig,
    store: ParamStore,
    cells: Vec<Cell>,
    head: layers::Linear,
}

impl Lstm {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        let (h, n_layers) = (config.hidden, config.n_layers);
        if h == 0 || n_layers == 0 {
            return Err(invalid(config.kind, "hidden and n_layers must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let mut cells = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let n_in = if l == 0 { 1 } else { h };
            cells.push(Cell {
                w_ih: layers::classical(
                    &mut store,
                    &format!("lstm{l}.w_ih"),
                    (n_in, 4 * h),
                    h,
                    &mut rng,
                ),
                w_hh: layers::classical(
                    &mut store,
                    &format!("lstm{l}.w_hh"),
                    (h, 4 * h),
                    h,
                    &mut rng,
                ),
                b_ih: layers::classical(
                    &mut store,
                    &format!("lstm{l}.b_ih"),
                    (1, 4 * h),
                    h,
                    &mut rng,
                ),
                b_hh: layers::classical(
                    &mut store,
                    &format!("lstm{l}.b_hh"),
                    (1, 4 * h),
                    h,
                    &mut rng,
                ),
            });
        }
        let head = layers::Linear::new(&mut store, "head", h, 1, &mut rng);
        Ok(Self {
            config,
            store,
            cells,
            head,
        })
    }
}

impl Forecaster for Lstm {
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
            core: 0,
            aux: 0,
            layers: 0,
        }
    }

    fn forward_batch(&self, g: &mut Graph<'_>, windows: &[&[f64]]) -> Result<NodeId, GraphError> {
        let (h_dim, b) = (self.config.hidden, windows.len());
        let t_len = windows[0].len();
        // Rows are sample-major: row `i·T + t` is step `t` of window `i`.
        let mut seq = window_column(g, windows);
        let step_rows: Vec<Vec<usize>> = (0..t_len)
            .map(|t| (0..b).map(|i| i * t_len + t).collect())
            .collect();
        let mut h = seq;
        for (l, cell) in self.cells.iter().enumerate() {
            let (w_ih, w_hh) = (g.param(cell.w_ih), g.param(cell.w_hh));
            let (b_ih, b_hh) = (g.param(cell.b_ih), g.param(cell.b_hh));
            // Input projections for every step at once.
            let xw = g.matmul(seq, w_ih)?;
            let xw = g.add_row(xw, b_ih)?;
            let xw = g.add_row(xw, b_hh)?;
            h = g.input(Array2::zeros((b, h_dim)));
            let mut c = g.input(Array2::zeros((b, h_dim)));
            let mut outputs = Vec::with_capacity(t_len);
            for rows in &step_rows {
                let x_t = g.select_rows(xw, rows)?;
                let hw = g.matmul(h, w_hh)?;
                let z = g.add(x_t, hw)?;
                let i = g.slice_cols(z, 0, h_dim)?;
                let f = g.slice_cols(z, h_dim, 2 * h_dim)?;
                let gg = g.slice_cols(z, 2 * h_dim, 3 * h_dim)?;
                let o = g.slice_cols(z, 3 * h_dim, 4 * h_dim)?;
                let (i, f, gg, o) = (g.sigmoid(i), g.sigmoid(f), g.tanh(gg), g.sigmoid(o));
                let fc = g.mul(f, c)?;
                let ig = g.mul(i, gg)?;
                c = g.add(fc, ig)?;
                let tc = g.tanh(c);
                h = g.mul(o, tc)?;
                outputs.push(h);
            }
            if l + 1 < self.cells.len() {
                // Step-major stack back to sample-major order.
                let stacked = g.concat_rows(&outputs)?;
                let order: Vec<usize> = (0..b * t_len)
                    .map(|r| (r % t_len) * b + r / t_len)
                    .collect();
                seq = g.select_rows(stacked, &order)?;
            }
        }
        self.head.forward(g, h)
    }
}
