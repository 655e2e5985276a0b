use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay:
///
/// ```text
/// θ ← θ − lr·wd·θ
/// m ← β1·m + (1−β1)·g          v ← β2·v + (1−β2)·g²
/// θ ← θ − lr · m̂ / (√v̂ + ε)    with m̂ = m/(1−β1^t), v̂ = v/(1−β2^t)
/// ```
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamW {
    pub fn new(store: &ParamStore, config: AdamWConfig) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|p| Tensor::zeros(p.value().rows(), p.value().cols()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients accumulated in `store`.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        if store.len() != self.m.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} parameters, store has {}",
                self.m.len(),
                store.len()
            )));
        }
        for (p, m) in store.iter().zip(&self.m) {
            if p.value().shape() != m.shape() {
                return Err(Error::shape(format!("optimizer state shape for `{}`", p.name)));
            }
        }
        self.step += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((param, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grad = param.grad.clone();
            let value = param.value_mut();
            for (((theta, g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *theta -= lr * weight_decay * *theta;
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Step decay: the base rate times `gamma` for every completed `step_size` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLr {
    pub base: f64,
    pub step_size: Option<usize>,
    pub gamma: f64,
}

impl StepLr {
    pub fn constant(base: f64) -> Self {
        Self {
            base,
            step_size: None,
            gamma: 1.0,
        }
    }

    pub fn decay_at(base: f64, boundary: usize) -> Self {
        Self {
            base,
            step_size: Some(boundary),
            gamma: 0.1,
        }
    }

    /// Learning rate for a 0-based epoch.
    pub fn lr(&self, epoch: usize) -> f64 {
        match self.step_size {
            Some(s) if s > 0 => self.base * self.gamma.powi((epoch / s) as i32),
            _ => self.base,
        }
    }
}
