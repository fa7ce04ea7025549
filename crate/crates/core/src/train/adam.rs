//! Adam with bias-corrected moment estimates.

use super::TrainError;
use crate::model::Parameters;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Parameters,
    pub v: Parameters,
    /// Number of updates applied so far.
    pub t: u64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zero moments shaped like `params`, with the usual defaults
    /// (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
    pub fn new(params: &Parameters, alpha: f64) -> Self {
        AdamState { m: params.zeros_like(), v: params.zeros_like(), t: 0, alpha, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

pub fn adam_update(params: &mut Parameters, grads: &Parameters, state: &mut AdamState) -> Result<(), TrainError> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) || !params.same_shape(&state.v) {
        return Err(TrainError::ShapeMismatch);
    }
    state.t += 1;
    let AdamState { m, v, t, alpha, beta1, beta2, eps } = state;
    let bc1 = 1.0 - beta1.powi(*t as i32);
    let bc2 = 1.0 - beta2.powi(*t as i32);
    for (((theta, g), m), v) in params.arrays_mut().into_iter().zip(grads.arrays()).zip(m.arrays_mut()).zip(v.arrays_mut())
    {
        for j in 0..theta.len() {
            m[j] = *beta1 * m[j] + (1.0 - *beta1) * g[j];
            v[j] = *beta2 * v[j] + (1.0 - *beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            theta[j] -= *alpha * m_hat / (v_hat.sqrt() + *eps);
        }
    }
    Ok(())
}
