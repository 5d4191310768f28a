use serde::{Deserialize, Serialize};

use super::{DenseNet, Gradients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Gradients,
    v: Gradients,
    step: u64,
}

impl AdamState {
    pub fn new(net: &DenseNet, config: AdamConfig) -> Self {
        Self {
            config,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `net` in the descent direction of `grads`.
///
/// Fails without touching `net` or `state` if any gradient is non-finite.
pub fn adam_step(net: &mut DenseNet, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if !grads.matches(net) || !state.m.matches(net) {
        return Err(Error::Architecture("optimizer state does not match network".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Divergence("non-finite gradient".into()));
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);

    for (((p, g), m), v) in net
        .params_mut()
        .zip(grads.values())
        .zip(state.m.values_mut())
        .zip(state.v.values_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
