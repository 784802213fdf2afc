//! Bias-corrected Adam over every tensor of a [`ModelParams`].

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// First moments, one per parameter tensor in declaration order.
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    /// Zeroed moments for `params` with `beta1 = 0.9`, `beta2 = 0.999`,
    /// `eps = 1e-8`.
    pub fn new(params: &ModelParams, lr: f64) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|(_, t)| t.zeros_like()).collect();
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn matches(&self, params: &ModelParams) -> bool {
        let tensors = params.tensors();
        self.m.len() == tensors.len()
            && self.v.len() == tensors.len()
            && tensors
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|((_, p), (m, v))| p.shape() == m.shape() && p.shape() == v.shape())
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState) -> Result<()> {
    if !state.matches(params) {
        return Err(Error::InvalidShape("optimizer state does not match parameters".into()));
    }
    let grad_tensors = grads.tensors();
    let mut param_tensors = params.tensors_mut();
    if grad_tensors.len() != param_tensors.len() {
        return Err(Error::InvalidShape(format!(
            "{} gradient tensors for {} parameters",
            grad_tensors.len(),
            param_tensors.len()
        )));
    }
    for ((name, p), (_, g)) in param_tensors.iter().zip(&grad_tensors) {
        if p.shape() != g.shape() {
            return Err(Error::InvalidShape(format!(
                "{name}: gradient {:?} vs parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
    }

    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = 1.0 - b1.powi(state.step as i32);
    let bc2 = 1.0 - b2.powi(state.step as i32);
    for (i, ((_, p), (_, g))) in param_tensors.iter_mut().zip(&grad_tensors).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *w -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
