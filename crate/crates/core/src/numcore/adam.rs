//! Adam optimizer with bias correction, plus the linear decay schedule.

use std::collections::HashMap;

use super::store::ParamStore;
use crate::{Error, Result};

pub const ADAM_BETA1: f32 = 0.9;
pub const ADAM_BETA2: f32 = 0.999;
pub const ADAM_EPS: f32 = 1e-8;

/// First/second moment buffers per parameter and the step counter.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    m: HashMap<String, Vec<f32>>,
    v: HashMap<String, Vec<f32>>,
    t: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update over every trainable entry of the store.
///
/// Frozen entries are left bit-identical. Each trainable entry must carry
/// a gradient; its grad buffer is cleared after the update. β₁=0.9,
/// β₂=0.999, ε=1e-8.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, lr: f32) -> Result<()> {
    for (name, entry) in store.iter() {
        if entry.trainable && entry.tensor.grad().is_none() {
            return Err(Error::MissingGrad(name.to_string()));
        }
    }
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);

    for (name, entry) in store.iter_mut() {
        if !entry.trainable {
            continue;
        }
        let n = entry.tensor.len();
        let m = state.m.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
        let v = state.v.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
        if m.len() != n || v.len() != n {
            return Err(Error::shape(format!(
                "optimizer state for `{name}` has stale size"
            )));
        }
        {
            let grad = entry.tensor.grad().expect("checked above").to_vec();
            let data = entry.tensor.data_mut();
            for i in 0..n {
                let g = grad[i];
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        entry.tensor.clear_grad();
    }
    Ok(())
}

/// Linearly decaying learning rate: `lr0 * (1 - step/total_steps)`.
pub fn linear_lr(step: u64, total_steps: u64, lr0: f32) -> Result<f32> {
    if total_steps == 0 {
        return Err(Error::invalid("total_steps must be positive"));
    }
    if step > total_steps {
        return Err(Error::invalid(format!(
            "step {step} exceeds total_steps {total_steps}"
        )));
    }
    Ok(lr0 * (1.0 - step as f32 / total_steps as f32))
}
