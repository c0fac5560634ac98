use super::{Gradients, ParamStore, Tensor};
use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay.
///
/// Each step first shrinks every parameter by `lr · weight_decay · value`, then
/// applies the bias-corrected Adam update computed from the raw gradient.
#[derive(Debug, Clone)]
pub struct AdamW {
    config: AdamWConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, store: &ParamStore) -> Self {
        let zeros = || -> Vec<Tensor> {
            store
                .iter()
                .map(|(_, p)| Array2::zeros(p.value.raw_dim()))
                .collect()
        };
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let AdamWConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (id, g) in grads.iter() {
            let i = id.index();
            Zip::from(store.value_mut(id))
                .and(&mut self.m[i])
                .and(&mut self.v[i])
                .and(g)
                .for_each(|p, m, v, &g| {
                    *p -= lr * weight_decay * *p;
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{ParamId, ParamKind};
    use ndarray::array;

    fn one_param(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", ParamKind::Classical, array![[v]]);
        s
    }

    fn grads_of(store: &ParamStore, g: f64) -> Gradients {
        let mut grads = Gradients::zeros(store);
        grads.accumulate(ParamId(0), &array![[g]]);
        grads
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut s = one_param(0.7);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &s);
        let g = grads_of(&s, 0.0);
        for _ in 0..3 {
            opt.step(&mut s, &g);
        }
        assert_eq!(s.value(ParamId(0))[[0, 0]], 0.7);
    }

    #[test]
    fn first_step_hand_computation() {
        // m̂ = g, v̂ = g² after bias correction, so the step is lr·g/(|g|+eps).
        let mut s = one_param(0.0);
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        let g = grads_of(&s, 1.0);
        opt.step(&mut s, &g);
        let m = (1.0 - 0.9) * 1.0;
        let v = (1.0 - 0.999) * 1.0;
        let want = -1e-3 * (m / (1.0 - 0.9)) / ((v / (1.0_f64 - 0.999)).sqrt() + 1e-8);
        let got = s.value(ParamId(0))[[0, 0]];
        assert!((got - want).abs() < 1e-12);
        assert!((got + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn decoupled_decay_with_zero_gradient() {
        let mut s = one_param(2.0);
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        let g = grads_of(&s, 0.0);
        opt.step(&mut s, &g);
        let want = 2.0 - 1e-3 * 0.01 * 2.0;
        assert!((s.value(ParamId(0))[[0, 0]] - want).abs() < 1e-15);
    }

    #[test]
    fn second_step_hand_computation() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut s = one_param(0.5);
        let mut opt = AdamW::new(cfg, &s);
        for g in [0.3, -0.2] {
            let g = grads_of(&s, g);
            opt.step(&mut s, &g);
        }

        let mut p = 0.5f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (t, g) in [(1, 0.3f64), (2, -0.2)] {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            p -= 1e-3 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((s.value(ParamId(0))[[0, 0]] - p).abs() < 1e-12);
        assert_eq!(opt.steps_taken(), 2);
    }
}
