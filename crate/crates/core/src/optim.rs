//! AdamW with decoupled weight decay.

use gsr_autograd::{Param, ParamStore};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.8, beta2: 0.99, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// Optimizer over the trainable parameters of one store. Moment buffers are
/// kept per parameter name.
pub struct AdamW {
    pub cfg: AdamWConfig,
    params: Vec<Param>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamW {
    pub fn new(store: &ParamStore, cfg: AdamWConfig) -> Self {
        let params = store.params();
        let m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        let v = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        Self { cfg, params, m, v, step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update at learning rate `lr`; parameters without a gradient are
    /// left untouched. Gradients are not cleared.
    pub fn step(&mut self, lr: f64) {
        self.step += 1;
        let AdamWConfig { beta1, beta2, eps, weight_decay } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, p) in self.params.iter().enumerate() {
            if !p.trainable() {
                continue;
            }
            let Some(g) = p.grad() else { continue };
            let mut w = p.to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..w.len() {
                w[k] -= lr * weight_decay * w[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                w[k] -= lr * (m[k] / bc1) / ((v[k] / bc2).sqrt() + eps);
            }
            p.set_data(w);
        }
    }

    /// `(name, m, v)` per parameter.
    pub fn state(&self) -> Vec<(String, Vec<f64>, Vec<f64>)> {
        self.params.iter().zip(self.m.iter().zip(&self.v)).map(|(p, (m, v))| (p.name().to_string(), m.clone(), v.clone())).collect()
    }

    pub fn load_state(&mut self, step: u64, state: &[(String, Vec<f64>, Vec<f64>)]) -> Result<()> {
        for (i, p) in self.params.iter().enumerate() {
            let (_, m, v) = state
                .iter()
                .find(|(n, _, _)| n == p.name())
                .ok_or_else(|| Error::Contract(format!("optimizer state missing for {}", p.name())))?;
            if m.len() != p.numel() || v.len() != p.numel() {
                return Err(Error::Contract(format!("optimizer state size mismatch for {}", p.name())));
            }
            self.m[i].clone_from(m);
            self.v[i].clone_from(v);
        }
        self.step = step;
        Ok(())
    }
}

/// `lr₀ · γ^epoch`.
pub fn lr_at_epoch(lr0: f64, gamma: f64, epoch: u64) -> f64 {
    lr0 * gamma.powi(epoch as i32)
}
