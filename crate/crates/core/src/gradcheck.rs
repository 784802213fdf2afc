//! Finite-difference verification of the full model gradient.
//!
//! The smoothing losses stop the gradient through the earlier frame of every
//! pair, so the objective differentiated numerically pins those operands to
//! their values at the unperturbed parameters. The value code here is kept
//! separate from [`crate::losses`] so the two paths check each other.

use crate::error::Result;
use crate::losses::{combined_loss, LossConfig, SmoothingKind};
use crate::model::{ms_tcn_backward, ms_tcn_forward, ModelParams};
use crate::tensor::{finite_diff_grad, max_relative_error, Tensor, DEFAULT_FD_EPS};

/// Denominator floor of the relative error; gradients below it are compared
/// in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    /// Tensors whose error is at or above the tolerance (or NaN).
    pub fn failures(&self) -> Vec<&TensorCheck> {
        self.tensors
            .iter()
            .filter(|t| !(t.max_rel_error < self.tolerance))
            .collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for t in &self.tensors {
            let verdict = if t.max_rel_error < self.tolerance { "ok" } else { "FAIL" };
            s.push_str(&format!("{:<32} {:>12.3e} {verdict}\n", t.name, t.max_rel_error));
        }
        s.push_str(&format!(
            "max relative error {:.3e} (tolerance {:.0e}): {}\n",
            self.max_error(),
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        ));
        s
    }
}

/// Analytic gradient of the combined loss through the backward passes.
pub fn analytic_gradient(
    model: &ModelParams,
    features: &Tensor,
    labels: &[usize],
    loss: &LossConfig,
    seed: u64,
) -> Result<(f64, ModelParams)> {
    let (outputs, cache) = ms_tcn_forward(features, model, true, seed)?;
    let l = combined_loss(&outputs, labels, loss)?;
    Ok((l.total, ms_tcn_backward(&cache, model, &l.grads)?))
}

fn log_floor(p: f64) -> f64 {
    p.max(1e-8).ln()
}

/// Combined loss with every smoothing pair's `t - 1` operand taken from
/// `pinned` instead of `outputs`.
fn pinned_objective(outputs: &[Tensor], pinned: &[Tensor], labels: &[usize], loss: &LossConfig) -> f64 {
    let mut total = 0.0;
    for (y, r) in outputs.iter().zip(pinned) {
        let (c, t_len) = (y.shape()[0], y.shape()[1]);
        let cls: f64 = labels
            .iter()
            .enumerate()
            .map(|(t, &k)| -log_floor(y.at2(k, t)))
            .sum::<f64>()
            / t_len as f64;
        let mut smooth = 0.0;
        for k in 0..c {
            for t in 1..t_len {
                let cur = log_floor(y.at2(k, t));
                let prev = log_floor(r.at2(k, t - 1));
                smooth += match loss.smoothing {
                    SmoothingKind::None => 0.0,
                    SmoothingKind::TMse => (cur - prev).abs().min(loss.tau).powi(2) / (t_len * c) as f64,
                    SmoothingKind::Kl => r.at2(k, t - 1).max(1e-8) * (prev - cur) / t_len as f64,
                };
            }
        }
        total += cls + loss.lambda * smooth;
    }
    total
}

/// Compares `analytic` against central differences of the stop-gradient
/// objective, tensor by tensor.
pub fn compare_with_finite_differences(
    model: &ModelParams,
    analytic: &ModelParams,
    features: &Tensor,
    labels: &[usize],
    loss: &LossConfig,
    seed: u64,
    eps: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let (pinned, _) = ms_tcn_forward(features, model, true, seed)?;
    let mut probe = model.clone();
    let names: Vec<String> = model.tensors().into_iter().map(|(n, _)| n).collect();
    let mut tensors = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let base = model.tensors()[i].1.clone();
        let numeric = finite_diff_grad(
            |t| {
                *probe.tensors_mut()[i].1 = t.clone();
                match ms_tcn_forward(features, &probe, true, seed) {
                    Ok((outs, _)) => pinned_objective(&outs, &pinned, labels, loss),
                    Err(_) => f64::NAN,
                }
            },
            &base,
            eps,
        )?;
        *probe.tensors_mut()[i].1 = base;
        tensors.push(TensorCheck {
            name: name.clone(),
            max_rel_error: max_relative_error(analytic.tensors()[i].1, &numeric, RELATIVE_ERROR_FLOOR),
        });
    }
    Ok(GradCheckReport { tolerance, tensors })
}

/// Full check: analytic backward vs finite differences at `eps = 1e-5`.
pub fn gradcheck(
    model: &ModelParams,
    features: &Tensor,
    labels: &[usize],
    loss: &LossConfig,
    seed: u64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = analytic_gradient(model, features, labels, loss, seed)?;
    compare_with_finite_differences(model, &analytic, features, labels, loss, seed, DEFAULT_FD_EPS, tolerance)
}
