//! Classification and smoothing losses over `(C, T)` probability tensors,
//! each returning its value and gradient with respect to the probabilities.
//!
//! Both smoothing losses compare frame `t` against frame `t - 1` and treat the
//! `t - 1` operand as a constant when differentiating.

use crate::error::{Error, Result};
use crate::layers::PROB_FLOOR;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothingKind {
    None,
    TMse,
    Kl,
}

impl std::str::FromStr for SmoothingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SmoothingKind::None),
            "t_mse" | "tmse" => Ok(SmoothingKind::TMse),
            "kl" => Ok(SmoothingKind::Kl),
            other => Err(Error::InvalidArgument(format!(
                "unknown smoothing kind {other:?} (expected none, t_mse or kl)"
            ))),
        }
    }
}

impl std::fmt::Display for SmoothingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SmoothingKind::None => "none",
            SmoothingKind::TMse => "t_mse",
            SmoothingKind::Kl => "kl",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
    pub tau: f64,
    pub smoothing: SmoothingKind,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 0.15,
            tau: 4.0,
            smoothing: SmoothingKind::TMse,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

#[inline]
fn clamped(p: f64) -> f64 {
    p.max(PROB_FLOOR)
}

/// d clamp(p) / dp: zero inside the clamped region.
#[inline]
fn clamp_slope(p: f64) -> f64 {
    if p > PROB_FLOOR {
        1.0
    } else {
        0.0
    }
}

/// Mean negative log-probability of the true class per frame.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (c, t_len) = probs.dims2()?;
    if labels.len() != t_len {
        return Err(Error::InvalidShape(format!(
            "{} labels for {t_len} frames",
            labels.len()
        )));
    }
    let mut grad = probs.zeros_like();
    let mut loss = 0.0;
    let n = t_len as f64;
    for (t, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(Error::LabelOutOfRange {
                label,
                classes: c,
                frame: t,
            });
        }
        let p = probs.at2(label, t);
        loss -= clamped(p).ln();
        grad.data_mut()[label * t_len + t] = -clamp_slope(p) / (n * clamped(p));
    }
    Ok((loss / n, grad))
}

/// Truncated mean squared error over consecutive-frame log-probabilities:
/// `1/(T C) sum_{t>=2, c} min(|log y_{t,c} - log y_{t-1,c}|, tau)^2`.
pub fn t_mse(probs: &Tensor, tau: f64) -> Result<(f64, Tensor)> {
    let (c, t_len) = probs.dims2()?;
    let mut grad = probs.zeros_like();
    if t_len < 2 {
        return Ok((0.0, grad));
    }
    let norm = (t_len * c) as f64;
    let mut loss = 0.0;
    for k in 0..c {
        let row = probs.row(k);
        let grow = grad.row_mut(k);
        for t in 1..t_len {
            let diff = clamped(row[t]).ln() - clamped(row[t - 1]).ln();
            if diff.abs() > tau {
                loss += tau * tau;
            } else {
                loss += diff * diff;
                grow[t] = 2.0 * diff * clamp_slope(row[t]) / (clamped(row[t]) * norm);
            }
        }
    }
    Ok((loss / norm, grad))
}

/// `1/T sum_{t>=2} KL(y_{t-1} || y_t)`.
pub fn kl_smoothing(probs: &Tensor) -> Result<(f64, Tensor)> {
    let (c, t_len) = probs.dims2()?;
    let mut grad = probs.zeros_like();
    if t_len < 2 {
        return Ok((0.0, grad));
    }
    let n = t_len as f64;
    let mut loss = 0.0;
    for k in 0..c {
        let row = probs.row(k);
        let grow = grad.row_mut(k);
        for t in 1..t_len {
            let prev = clamped(row[t - 1]);
            let cur = clamped(row[t]);
            loss += prev * (prev.ln() - cur.ln());
            grow[t] = -prev * clamp_slope(row[t]) / (n * cur);
        }
    }
    Ok((loss / n, grad))
}

/// Loss terms of one stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageLoss {
    pub classification: f64,
    /// Unweighted smoothing term (multiply by lambda for its contribution).
    pub smoothing: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct CombinedLoss {
    pub total: f64,
    pub stages: Vec<StageLoss>,
    /// Gradient of `total` with respect to each stage's probabilities.
    pub grads: Vec<Tensor>,
}

/// `sum_s (L_cls + lambda * L_smooth)` over all stage outputs.
pub fn combined_loss(stage_outputs: &[Tensor], labels: &[usize], config: &LossConfig) -> Result<CombinedLoss> {
    config.validate()?;
    let first = stage_outputs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no stage outputs".into()))?;
    let mut out = CombinedLoss {
        total: 0.0,
        stages: Vec::with_capacity(stage_outputs.len()),
        grads: Vec::with_capacity(stage_outputs.len()),
    };
    for probs in stage_outputs {
        probs.ensure_shape(first.shape(), "stage output")?;
        let (cls, mut grad) = cross_entropy(probs, labels)?;
        let smooth = match config.smoothing {
            SmoothingKind::None => None,
            SmoothingKind::TMse => Some(t_mse(probs, config.tau)?),
            SmoothingKind::Kl => Some(kl_smoothing(probs)?),
        };
        let smoothing = match smooth {
            Some((value, mut g)) if config.lambda != 0.0 => {
                g.scale(config.lambda);
                grad.add_assign(&g)?;
                value
            }
            Some((value, _)) => value,
            None => 0.0,
        };
        let total = cls + config.lambda * smoothing;
        out.total += total;
        out.stages.push(StageLoss {
            classification: cls,
            smoothing,
            total,
        });
        out.grads.push(grad);
    }
    if !out.total.is_finite() {
        return Err(Error::Numeric(format!("loss is not finite: {}", out.total)));
    }
    Ok(out)
}
