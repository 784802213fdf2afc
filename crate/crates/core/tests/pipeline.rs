use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use mstcn::commands::{cmd_eval, cmd_synth, cmd_train, EvalSource, REPORT_KV};
use mstcn::config::{RunConfig, SynthFileConfig};
use mstcn::gradcheck::{analytic_gradient, compare_with_finite_differences};
use mstcn::commands::{gradcheck_instance, GradcheckOptions};
use mstcn::tensor::DEFAULT_FD_EPS;
use mstcn::{Error, LossConfig, SmoothingKind};

fn small_dataset(root: &Path) {
    let mut synth = SynthFileConfig::default();
    synth.train_videos = 8;
    synth.test_videos = 6;
    synth.mean_length = 150.0;
    synth.mean_duration = 25.0;
    cmd_synth(&synth, root).unwrap();
}

fn small_run(data: &Path, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.dataset = Some(data.to_path_buf());
    cfg.out_dir = out.to_path_buf();
    cfg.stages = 2;
    cfg.layers = 5;
    cfg.filters = 16;
    cfg.lr = 5e-3;
    cfg.epochs = 4;
    cfg
}

fn kv(path: &Path) -> BTreeMap<String, f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.parse().unwrap()))
        .collect()
}

#[test]
fn training_reduces_the_loss() {
    let tmp = tempfile::tempdir().unwrap();
    small_dataset(&tmp.path().join("data"));
    let cfg = small_run(&tmp.path().join("data"), &tmp.path().join("run"));
    let out = cmd_train(&cfg).unwrap();
    let first = out.history.first().unwrap().total;
    let last = out.history.last().unwrap().total;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn logged_total_decomposes_into_terms() {
    let tmp = tempfile::tempdir().unwrap();
    small_dataset(&tmp.path().join("data"));
    let mut cfg = small_run(&tmp.path().join("data"), &tmp.path().join("run"));
    cfg.epochs = 2;
    cfg.lambda = 0.3;
    let out = cmd_train(&cfg).unwrap();
    for e in &out.history {
        let recombined = e.classification() + cfg.lambda * e.smoothing();
        assert!((e.total - recombined).abs() < 1e-9 * e.total.abs().max(1.0));
        for s in &e.stages {
            assert!((s.total - (s.classification + cfg.lambda * s.smoothing)).abs() < 1e-9);
        }
    }
    let log = fs::read_to_string(out.run_dir.join("train.log")).unwrap();
    assert!(log.lines().any(|l| l.starts_with("epoch   2 loss")), "{log}");
}

#[test]
fn overall_report_pools_counts_and_averages_videos() {
    let tmp = tempfile::tempdir().unwrap();
    small_dataset(&tmp.path().join("data"));
    let mut cfg = small_run(&tmp.path().join("data"), &tmp.path().join("run"));
    cfg.epochs = 2;
    cmd_train(&cfg).unwrap();
    let kv = kv(&cfg.out_dir.join(REPORT_KV));
    let videos: Vec<&str> = kv
        .keys()
        .filter_map(|k| k.strip_prefix("video.")?.strip_suffix(".acc"))
        .collect();
    assert_eq!(videos.len(), 6);
    let mean = |m: &str| videos.iter().map(|v| kv[&format!("video.{v}.{m}")]).sum::<f64>() / videos.len() as f64;
    assert!((kv["overall.acc"] - mean("acc")).abs() < 1e-5);
    assert!((kv["overall.edit"] - mean("edit")).abs() < 1e-5);
    for k in ["10", "25", "50"] {
        let sum = |m: &str| videos.iter().map(|v| kv[&format!("video.{v}.{m}@{k}")]).sum::<f64>();
        let (tp, fp, fn_) = (sum("tp"), sum("fp"), sum("fn"));
        assert_eq!(kv[&format!("overall.tp@{k}")], tp);
        let f1 = if tp == 0.0 { 0.0 } else { 200.0 * tp / (2.0 * tp + fp + fn_) };
        assert!((kv[&format!("overall.f1@{k}")] - f1).abs() < 1e-5);
    }
}

#[test]
fn duration_groups_partition_the_videos() {
    let tmp = tempfile::tempdir().unwrap();
    small_dataset(&tmp.path().join("data"));
    let mut cfg = small_run(&tmp.path().join("data"), &tmp.path().join("run"));
    cfg.epochs = 1;
    cfg.group_by_duration = true;
    cmd_train(&cfg).unwrap();
    let kv = kv(&cfg.out_dir.join(REPORT_KV));
    let groups = ["short", "medium", "long"].map(|g| kv[&format!("group.{g}.videos")]);
    assert_eq!(groups, [2.0, 2.0, 2.0]);
    let frames: f64 = ["short", "medium", "long"].iter().map(|g| kv[&format!("group.{g}.frames")]).sum();
    assert_eq!(frames, kv["overall.frames"]);
    assert!(kv["group.short.frames"] <= kv["group.long.frames"]);
}

#[test]
fn earlier_stage_can_be_scored() {
    let tmp = tempfile::tempdir().unwrap();
    small_dataset(&tmp.path().join("data"));
    let mut cfg = small_run(&tmp.path().join("data"), &tmp.path().join("run"));
    cfg.epochs = 1;
    cmd_train(&cfg).unwrap();
    let ckpt = cfg.out_dir.join("final.ckpt");
    cfg.out_dir = tmp.path().join("eval");
    let (_, s1) = cmd_eval(&cfg, &EvalSource::Checkpoint { path: ckpt.clone(), stage: Some(1) }).unwrap();
    assert_eq!(s1.num_videos, 6);
    let err = cmd_eval(&cfg, &EvalSource::Checkpoint { path: ckpt, stage: Some(3) }).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn mismatched_checkpoint_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    small_dataset(&tmp.path().join("data"));
    let mut cfg = small_run(&tmp.path().join("data"), &tmp.path().join("run"));
    cfg.epochs = 1;
    cmd_train(&cfg).unwrap();

    let mut other = SynthFileConfig::default();
    other.num_classes = 5;
    other.train_videos = 2;
    other.test_videos = 2;
    other.mean_length = 60.0;
    other.mean_duration = 10.0;
    cmd_synth(&other, &tmp.path().join("other")).unwrap();
    let mut eval = cfg.clone();
    eval.dataset = Some(tmp.path().join("other"));
    eval.out_dir = tmp.path().join("eval");
    let err = cmd_eval(&eval, &EvalSource::Checkpoint { path: cfg.out_dir.join("final.ckpt"), stage: None }).unwrap_err();
    assert!(matches!(err, Error::ConfigMismatch(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn sign_error_is_reported_on_the_right_tensor() {
    let (model, x, labels) = gradcheck_instance(&GradcheckOptions::default()).unwrap();
    let loss = LossConfig {
        lambda: 0.15,
        tau: 4.0,
        smoothing: SmoothingKind::TMse,
    };
    let (_, mut grads) = analytic_gradient(&model, &x, &labels, &loss, 1).unwrap();
    for (name, t) in grads.tensors_mut() {
        if name == "stage1.layer2.w1" {
            t.scale(-1.0);
        }
    }
    let report = compare_with_finite_differences(&model, &grads, &x, &labels, &loss, 1, DEFAULT_FD_EPS, 1e-4).unwrap();
    let failed: Vec<&str> = report.failures().iter().map(|t| t.name.as_str()).collect();
    assert_eq!(failed, ["stage1.layer2.w1"]);
    assert!(report.render().contains("stage1.layer2.w1"));
}
