//! Adam with bias correction, global-norm clipping and an optional weight EMA.

use super::{Gradients, NnError, ParamStore, Result, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: ParamStore,
    v: ParamStore,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, m: ParamStore::new(), v: ParamStore::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. Every gradient must name an existing parameter of
    /// the same shape; parameters without a gradient are left alone.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<()> {
        for (name, g) in grads {
            let p = params.get(name).ok_or_else(|| NnError::UnknownParam(name.clone()))?;
            if p.shape() != g.shape() {
                return Err(NnError::ShapeMismatch(format!("gradient of {name}: {:?} vs {:?}", g.shape(), p.shape())));
            }
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - (c.beta1 as f64).powi(self.step as i32);
        let bc2 = 1.0 - (c.beta2 as f64).powi(self.step as i32);
        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let m = self.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            for (((pv, &gv), mv), vv) in
                p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut().iter_mut()).zip(v.data_mut().iter_mut())
            {
                *mv = c.beta1 * *mv + (1.0 - c.beta1) * gv;
                *vv = c.beta2 * *vv + (1.0 - c.beta2) * gv * gv;
                let mhat = *mv as f64 / bc1;
                let vhat = *vv as f64 / bc2;
                *pv -= (c.lr as f64 * mhat / (vhat.sqrt() + c.eps as f64)) as f32;
            }
        }
        Ok(())
    }
}

/// Scale gradients so their global L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_grad_norm(grads: &mut Gradients, max_norm: f32) -> f64 {
    let norm = grads.values().map(Tensor::sum_squares).sum::<f64>().sqrt();
    if norm > max_norm as f64 && norm > 0.0 {
        let s = (max_norm as f64 / norm) as f32;
        for g in grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// Exponential moving average of the weights.
#[derive(Clone, Debug)]
pub struct Ema {
    pub decay: f32,
    pub shadow: ParamStore,
}

impl Ema {
    pub fn new(decay: f32, params: &ParamStore) -> Self {
        Self { decay, shadow: params.clone() }
    }

    pub fn update(&mut self, params: &ParamStore) {
        for (name, p) in params {
            if let Some(s) = self.shadow.get_mut(name) {
                for (sv, &pv) in s.data_mut().iter_mut().zip(p.data()) {
                    *sv = self.decay * *sv + (1.0 - self.decay) * pv;
                }
            }
        }
    }
}
