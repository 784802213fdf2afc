//! Training loop (one video per Adam step) and dataset-level evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::SequenceSample;
use crate::error::{Error, Result};
use crate::losses::{combined_loss, LossConfig, StageLoss};
use crate::metrics::{aggregate, evaluate, EvalOptions, EvalReport};
use crate::model::{ms_tcn_backward, ms_tcn_forward, predict, ModelParams};
use crate::optim::{adam_step, AdamState};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub loss: LossConfig,
    pub epochs: usize,
    pub seed: u64,
}

/// Losses averaged over the videos of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub total: f64,
    pub stages: Vec<StageLoss>,
}

impl EpochStats {
    pub fn classification(&self) -> f64 {
        self.stages.iter().map(|s| s.classification).sum()
    }

    pub fn smoothing(&self) -> f64 {
        self.stages.iter().map(|s| s.smoothing).sum()
    }

    pub fn log_line(&self) -> String {
        let stages: Vec<String> = self
            .stages
            .iter()
            .enumerate()
            .map(|(i, s)| format!("s{}={:.6}/{:.6}", i + 1, s.classification, s.smoothing))
            .collect();
        format!(
            "epoch {:>3} loss {:.6} cls {:.6} smooth {:.6} {}",
            self.epoch,
            self.total,
            self.classification(),
            self.smoothing(),
            stages.join(" ")
        )
    }
}

fn step_seed(seed: u64, epoch: usize, step: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D)
        ^ ((epoch as u64) << 32)
        ^ step as u64
}

/// Runs one epoch over `samples` in a seeded random order.
pub fn train_epoch(
    model: &mut ModelParams,
    state: &mut AdamState,
    samples: &[SequenceSample],
    loss: &LossConfig,
    seed: u64,
    epoch: usize,
) -> Result<EpochStats> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(step_seed(seed, epoch, usize::MAX)));
    let stages = model.stages.len();
    let mut sums = vec![StageLoss::default(); stages];
    let mut total = 0.0;
    for (step, &i) in order.iter().enumerate() {
        let s = &samples[i];
        let (outputs, cache) = ms_tcn_forward(&s.features, model, true, step_seed(seed, epoch, step))?;
        let l = combined_loss(&outputs, &s.labels, loss)?;
        let grads = ms_tcn_backward(&cache, model, &l.grads)?;
        adam_step(model, &grads, state)?;
        if !model.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite parameters after epoch {epoch} step {step} ({})",
                s.id
            )));
        }
        total += l.total;
        for (acc, st) in sums.iter_mut().zip(&l.stages) {
            acc.classification += st.classification;
            acc.smoothing += st.smoothing;
            acc.total += st.total;
        }
    }
    let n = samples.len().max(1) as f64;
    for acc in &mut sums {
        acc.classification /= n;
        acc.smoothing /= n;
        acc.total /= n;
    }
    Ok(EpochStats {
        epoch,
        total: total / n,
        stages: sums,
    })
}

/// Trains for `options.epochs` epochs, calling `on_epoch` after each.
pub fn train(
    model: &mut ModelParams,
    state: &mut AdamState,
    samples: &[SequenceSample],
    options: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochStats, &ModelParams, &AdamState) -> Result<()>,
) -> Result<Vec<EpochStats>> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    let mut history = Vec::with_capacity(options.epochs);
    for epoch in 1..=options.epochs {
        let stats = train_epoch(model, state, samples, &options.loss, options.seed, epoch)?;
        on_epoch(&stats, model, state)?;
        history.push(stats);
    }
    Ok(history)
}

/// Per-video reports (in input order) and their aggregate, using the output
/// of `stage` (1-based, `None` for the last).
pub fn evaluate_model(
    model: &ModelParams,
    samples: &[SequenceSample],
    options: &EvalOptions,
    stage: Option<usize>,
) -> Result<(Vec<(String, EvalReport)>, EvalReport)> {
    let mut per_video = Vec::with_capacity(samples.len());
    for s in samples {
        let pred = predict(&s.features, model, stage)?;
        per_video.push((s.id.clone(), evaluate(&pred, &s.labels, options)?));
    }
    let reports: Vec<EvalReport> = per_video.iter().map(|(_, r)| r.clone()).collect();
    let agg = aggregate(&reports)?;
    Ok((per_video, agg))
}
