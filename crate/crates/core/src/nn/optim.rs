use serde::{Deserialize, Serialize};

use super::param::{Gradients, ParamStore};
use super::tensor::{Real, Tensor};
use crate::error::{bail, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
    pub aux_weight: f64,
}

impl TrainConfig {
    /// η = 1e−4, decay 0.05, batch 16, 10 warm-up epochs, 50 epochs,
    /// patience 15, λ = 0.01.
    pub fn paper() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 0.05,
            warmup_epochs: 10,
            max_epochs: 50,
            batch_size: 16,
            patience: 15,
            seed: 0,
            aux_weight: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            bail!(Parameter, "learning rate must be positive, got {}", self.lr);
        }
        if self.patience < 1 || self.batch_size < 1 || self.max_epochs < 1 {
            bail!(Parameter, "patience, batch size and epoch count must be at least 1");
        }
        if !(self.aux_weight >= 0.0 && self.weight_decay >= 0.0) {
            bail!(Parameter, "aux weight and weight decay must be non-negative");
        }
        if self.warmup_epochs > self.max_epochs {
            bail!(Parameter, "warm-up longer than training");
        }
        Ok(())
    }
}

/// Learning rate for `epoch`: `η·(epoch + 1)/warmup` during warm-up, then
/// cosine annealing from `η` to 0 at the final epoch.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let w = cfg.warmup_epochs;
    if epoch < w {
        return cfg.lr * (epoch + 1) as f64 / w as f64;
    }
    let span = cfg.max_epochs.saturating_sub(w + 1);
    if span == 0 {
        return cfg.lr;
    }
    let progress = ((epoch - w) as f64 / span as f64).min(1.0);
    cfg.lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// AdamW with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(store: &ParamStore<T>, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor<T>> = store.iter().map(|(_, _, p)| Tensor::zeros(&p.shape)).collect();
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - self.beta1), T::from_f64(1.0 - self.beta2));
        let decay = T::from_f64(1.0 - lr * self.weight_decay);
        let step_size = T::from_f64(lr / bc1);
        let inv_bc2 = T::from_f64(1.0 / bc2);
        let eps = T::from_f64(self.eps);
        for (i, p) in store.values_mut().iter_mut().enumerate() {
            let g = &grads.grads[i].data;
            let (m, v) = (&mut self.m[i].data, &mut self.v[i].data);
            for j in 0..p.data.len() {
                m[j] = b1 * m[j] + one_b1 * g[j];
                v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
                let update = step_size * m[j] / ((v[j] * inv_bc2).sqrt() + eps);
                p.data[j] = p.data[j] * decay - update;
            }
        }
    }
}

/// Patience-based early stopping on a validation score (higher is better).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub stop: bool,
    pub best_index: usize,
}

/// Stops once the last `patience` entries all fail to exceed the best value
/// seen before them.
pub fn early_stopper(history: &[f64], patience: usize) -> EarlyStop {
    let mut best_index = 0;
    for (i, v) in history.iter().enumerate() {
        if *v > history[best_index] {
            best_index = i;
        }
    }
    let stop = patience >= 1 && !history.is_empty() && history.len() - 1 - best_index >= patience;
    EarlyStop { stop, best_index }
}
