use crate::error::{Error, Result};
use crate::net::Real;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self { m: vec![T::zero(); len], v: vec![T::zero(); len], t: 0 }
    }
}

/// One bias-corrected Adam update of `params` in place. The result depends only
/// on the arguments.
pub fn adam_step<T: Real>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (c1, c2) = (T::one() - b1, T::one() - b2);
    let corr1 = T::lit(1.0 / (1.0 - cfg.beta1.powi(t)));
    let corr2 = T::lit(1.0 / (1.0 - cfg.beta2.powi(t)));
    let lr = T::lit(lr);
    let eps = T::lit(cfg.eps);
    for i in 0..params.len() {
        let g = grads[i];
        let m = b1 * state.m[i] + c1 * g;
        let v = b2 * state.v[i] + c2 * g * g;
        state.m[i] = m;
        state.v[i] = v;
        params[i] = params[i] - lr * (m * corr1) / ((v * corr2).sqrt() + eps);
    }
    Ok(())
}
