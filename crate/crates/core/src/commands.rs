//! The subcommands of the `mstcn` binary as library functions: `train`,
//! `eval`, `predict`, `gradcheck` and `synth`.
//!
//! Every run directory gets the same fixed file names: `config.resolved`,
//! `train.log`, `final.ckpt`, `best.ckpt`, `report.txt` and `report.kv`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{RunConfig, SynthFileConfig};
use crate::data::{
    generate_synthetic, labels_path, load_feature_file, load_labels, load_split, split_path,
    temporal_downsample, write_dataset, write_labels, ClassMapping, SequenceSample,
};
use crate::error::{Error, Result};
use crate::gradcheck::{gradcheck, GradCheckReport};
use crate::losses::{LossConfig, SmoothingKind};
use crate::metrics::{aggregate, evaluate, EvalOptions, EvalReport};
use crate::model::{predict, ModelConfig, ModelParams};
use crate::optim::AdamState;
use crate::tensor::Tensor;
use crate::train::{evaluate_model, train, EpochStats, TrainOptions};

pub const CONFIG_FILE: &str = "config.resolved";
pub const LOG_FILE: &str = "train.log";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_KV: &str = "report.kv";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn dataset_root(cfg: &RunConfig) -> Result<&Path> {
    cfg.dataset
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("no dataset configured (set `dataset`)".into()))
}

/// Loads a split, applying the configured temporal downsampling.
pub fn load_samples(cfg: &RunConfig, split: &str) -> Result<(ClassMapping, Vec<SequenceSample>)> {
    let (mapping, samples) = load_split(dataset_root(cfg)?, split)?;
    let samples = samples
        .iter()
        .map(|s| temporal_downsample(s, cfg.downsample))
        .collect::<Result<_>>()?;
    Ok((mapping, samples))
}

pub fn eval_options(cfg: &RunConfig, mapping: &ClassMapping) -> Result<EvalOptions> {
    let exclude = cfg
        .exclude
        .iter()
        .map(|n| {
            mapping
                .id(n)
                .ok_or_else(|| Error::InvalidArgument(format!("excluded class {n:?} is not in the mapping")))
        })
        .collect::<Result<_>>()?;
    Ok(EvalOptions {
        exclude,
        ..EvalOptions::default()
    })
}

/// Aggregate reports of three duration groups (shortest, middle and longest
/// third of the videos).
pub fn duration_groups(
    samples: &[SequenceSample],
    per_video: &[(String, EvalReport)],
) -> Result<Vec<(&'static str, EvalReport)>> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by_key(|&i| (samples[i].len(), i));
    let n = order.len();
    let mut groups = Vec::new();
    for (g, name) in ["short", "medium", "long"].into_iter().enumerate() {
        let (lo, hi) = (g * n / 3, (g + 1) * n / 3);
        if lo == hi {
            continue;
        }
        let reports: Vec<EvalReport> = order[lo..hi].iter().map(|&i| per_video[i].1.clone()).collect();
        groups.push((name, aggregate(&reports)?));
    }
    Ok(groups)
}

/// Writes `report.txt` and `report.kv` into `dir`.
pub fn write_reports(
    dir: &Path,
    per_video: &[(String, EvalReport)],
    overall: &EvalReport,
    groups: &[(&str, EvalReport)],
) -> Result<()> {
    let mut text = String::new();
    let mut kv = String::new();
    for (id, r) in per_video {
        text.push_str(&format!("{id}  {}\n", r.summary()));
        kv.push_str(&r.to_kv(&format!("video.{id}.")));
    }
    for (name, r) in groups {
        text.push_str(&format!("group {name} ({} videos)  {}\n", r.num_videos, r.summary()));
        kv.push_str(&r.to_kv(&format!("group.{name}.")));
    }
    text.push_str(&format!("overall ({} videos)  {}\n", overall.num_videos, overall.summary()));
    kv.push_str(&overall.to_kv("overall."));
    write_file(&dir.join(REPORT_TEXT), &text)?;
    write_file(&dir.join(REPORT_KV), &kv)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    pub report: EvalReport,
    pub run_dir: PathBuf,
}

/// Trains on the train split and evaluates the final model on the test split
/// (or the train split when no test split exists).
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (mapping, train_set) = load_samples(cfg, &cfg.train_split)?;
    let root = dataset_root(cfg)?;
    let test_set = if split_path(root, &cfg.test_split).exists() {
        let (m, s) = load_samples(cfg, &cfg.test_split)?;
        if m != mapping {
            return Err(Error::ConfigMismatch("train and test mappings differ".into()));
        }
        Some(s)
    } else {
        None
    };
    let input_dim = train_set[0].feature_dim();
    if let Some(bad) = test_set.iter().flatten().find(|s| s.feature_dim() != input_dim) {
        return Err(Error::InvalidShape(format!("{}: feature dimension differs from training data", bad.id)));
    }
    let options = eval_options(cfg, &mapping)?;
    let model_cfg = cfg.model(mapping.len(), input_dim)?;

    let dir = &cfg.out_dir;
    create_dir(dir)?;
    let mut resolved = cfg.clone();
    resolved.classes = Some(mapping.len());
    resolved.input_dim = Some(input_dim);
    write_file(&dir.join(CONFIG_FILE), &resolved.render())?;

    let mut model = ModelParams::init(&model_cfg, cfg.seed)?;
    let mut state = AdamState::new(&model, cfg.lr);
    let log_path = dir.join(LOG_FILE);
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    writeln!(
        log,
        "# {} videos, {} parameters, seed {}",
        train_set.len(),
        model.num_parameters(),
        cfg.seed
    )
    .map_err(|e| Error::io(&log_path, e))?;

    let mut best = f64::INFINITY;
    let opts = TrainOptions {
        loss: cfg.loss(),
        epochs: cfg.epochs,
        seed: cfg.seed,
    };
    let history = train(&mut model, &mut state, &train_set, &opts, |stats, m, st| {
        writeln!(log, "{}", stats.log_line()).map_err(|e| Error::io(&log_path, e))?;
        if stats.total < best {
            best = stats.total;
            save_checkpoint(dir.join(BEST_CHECKPOINT), m, Some(st))?;
        }
        Ok(())
    })?;
    save_checkpoint(dir.join(FINAL_CHECKPOINT), &model, Some(&state))?;

    let eval_set = test_set.as_deref().unwrap_or(&train_set);
    let (per_video, overall) = evaluate_model(&model, eval_set, &options, None)?;
    let groups = if cfg.group_by_duration {
        duration_groups(eval_set, &per_video)?
    } else {
        Vec::new()
    };
    write_reports(dir, &per_video, &overall, &groups)?;
    Ok(TrainOutcome {
        history,
        report: overall,
        run_dir: dir.clone(),
    })
}

/// What `eval` scores against the ground truth of the test split.
#[derive(Debug, Clone)]
pub enum EvalSource {
    Checkpoint { path: PathBuf, stage: Option<usize> },
    /// Directory of `<id>.txt` label files, one class name per frame.
    Predictions(PathBuf),
}

pub fn cmd_eval(cfg: &RunConfig, source: &EvalSource) -> Result<(Vec<(String, EvalReport)>, EvalReport)> {
    cfg.validate()?;
    let (mapping, samples) = load_samples(cfg, &cfg.test_split)?;
    let options = eval_options(cfg, &mapping)?;
    let (per_video, overall) = match source {
        EvalSource::Checkpoint { path, stage } => {
            let model = load_checkpoint(path)?.model;
            check_model_against_data(&model.config, &mapping, samples[0].feature_dim())?;
            evaluate_model(&model, &samples, &options, *stage)?
        }
        EvalSource::Predictions(dir) => {
            let mut per_video = Vec::with_capacity(samples.len());
            for s in &samples {
                let pred = load_labels(dir.join(format!("{}.txt", s.id)), &mapping)?;
                per_video.push((s.id.clone(), evaluate(&pred, &s.labels, &options)?));
            }
            let reports: Vec<EvalReport> = per_video.iter().map(|(_, r)| r.clone()).collect();
            let overall = aggregate(&reports)?;
            (per_video, overall)
        }
    };
    let groups = if cfg.group_by_duration {
        duration_groups(&samples, &per_video)?
    } else {
        Vec::new()
    };
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join(CONFIG_FILE), &cfg.render())?;
    write_reports(&cfg.out_dir, &per_video, &overall, &groups)?;
    Ok((per_video, overall))
}

fn check_model_against_data(model: &ModelConfig, mapping: &ClassMapping, input_dim: usize) -> Result<()> {
    if model.classes != mapping.len() {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint predicts {} classes, mapping has {}",
            model.classes,
            mapping.len()
        )));
    }
    if model.input_dim != input_dim {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint expects {}-dimensional features, data has {input_dim}",
            model.input_dim
        )));
    }
    Ok(())
}

/// Predicts one feature file and writes one class name per frame to `out`.
pub fn cmd_predict(
    checkpoint: &Path,
    features: &Path,
    mapping: &Path,
    out: &Path,
    stage: Option<usize>,
    downsample: usize,
) -> Result<Vec<usize>> {
    let model = load_checkpoint(checkpoint)?.model;
    let mapping = ClassMapping::load(mapping)?;
    let mut x = load_feature_file(features)?;
    if downsample > 1 {
        let t = x.shape()[1];
        let s = SequenceSample::new("x", x, vec![0; t])?;
        x = temporal_downsample(&s, downsample)?.features;
    }
    check_model_against_data(&model.config, &mapping, x.shape()[0])?;
    let labels = predict(&x, &model, stage)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_labels(out, &labels, &mapping)?;
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    pub model: ModelConfig,
    pub frames: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            model: ModelConfig {
                stages: 2,
                layers: 3,
                filters: 8,
                classes: 4,
                input_dim: 6,
                dilations: None,
                feature_passthrough: false,
                dropout: 0.5,
            },
            frames: 16,
            seed: 1,
            tolerance: 1e-4,
        }
    }
}

/// A seeded random instance: model, features and a piecewise-constant label
/// sequence.
pub fn gradcheck_instance(opts: &GradcheckOptions) -> Result<(ModelParams, Tensor, Vec<usize>)> {
    let model = ModelParams::init(&opts.model, opts.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let mut x = Tensor::zeros(&[opts.model.input_dim, opts.frames])?;
    x.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    let mut labels = Vec::with_capacity(opts.frames);
    let mut class = rng.gen_range(0..opts.model.classes);
    while labels.len() < opts.frames {
        let run = rng.gen_range(1..=5).min(opts.frames - labels.len());
        labels.extend(std::iter::repeat(class).take(run));
        class = rng.gen_range(0..opts.model.classes);
    }
    Ok((model, x, labels))
}

/// Loss configurations swept by the `gradcheck` subcommand.
pub fn gradcheck_sweep() -> Vec<LossConfig> {
    let mut v = Vec::new();
    for smoothing in [SmoothingKind::TMse, SmoothingKind::Kl] {
        for lambda in [0.0, 0.15] {
            v.push(LossConfig {
                lambda,
                tau: 4.0,
                smoothing,
            });
        }
    }
    v
}

pub fn cmd_gradcheck(opts: &GradcheckOptions, losses: &[LossConfig]) -> Result<Vec<(LossConfig, GradCheckReport)>> {
    let (model, x, labels) = gradcheck_instance(opts)?;
    losses
        .iter()
        .map(|l| Ok((*l, gradcheck(&model, &x, &labels, l, opts.seed, opts.tolerance)?)))
        .collect()
}

/// Generates a synthetic corpus in the dataset layout, with `train` and
/// `test` splits and the resolved generator settings in `synth.resolved`.
pub fn cmd_synth(synth: &SynthFileConfig, out_dir: &Path) -> Result<Vec<SequenceSample>> {
    let gen = synth.generator()?;
    let (mapping, samples) = generate_synthetic(&gen)?;
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let (train_ids, test_ids) = ids.split_at(synth.train_videos);
    let mut splits = vec![("train", train_ids.to_vec())];
    if !test_ids.is_empty() {
        splits.push(("test", test_ids.to_vec()));
    }
    write_dataset(out_dir, &mapping, &samples, &splits)?;
    write_file(&out_dir.join("synth.resolved"), &synth.render())?;
    // confirm the corpus reads back
    for s in &samples {
        let labels = load_labels(labels_path(out_dir, &s.id), &mapping)?;
        if labels != s.labels {
            return Err(Error::Parse {
                path: labels_path(out_dir, &s.id),
                reason: "label file does not read back".into(),
            });
        }
    }
    Ok(samples)
}
