use crate::params::{ParamGrads, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

/// Adam with bias correction. Moments are kept per parameter in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<F> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(store: &ParamStore<F>, config: AdamConfig) -> Self {
        let m = store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect::<Vec<_>>();
        Self {
            config,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    /// One update with learning rate `lr`. Frozen parameters and parameters
    /// without a gradient are left untouched.
    pub fn update(&mut self, store: &mut ParamStore<F>, grads: &ParamGrads<F>, lr: f64) {
        self.step += 1;
        let b1 = self.config.beta1;
        let b2 = self.config.beta2;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let step_size = F::from_f64(lr / c1);
        let (b1f, b2f) = (F::from_f64(b1), F::from_f64(b2));
        let (ob1, ob2) = (F::from_f64(1.0 - b1), F::from_f64(1.0 - b2));
        let inv_c2 = F::from_f64(1.0 / c2);
        let eps = F::from_f64(self.config.eps);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !store.is_trainable(id) {
                continue;
            }
            let Some(g) = grads.get(id) else { continue };
            let m = self.m[id.0].data_mut();
            let v = self.v[id.0].data_mut();
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = b1f * m[i] + ob1 * g[i];
                v[i] = b2f * v[i] + ob2 * g[i] * g[i];
                let vhat = v[i] * inv_c2;
                p[i] -= step_size * m[i] / (vhat.sqrt() + eps);
            }
        }
    }
}
