use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mstcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mstcn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_kv(path: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn synth(dir: &Path) {
    let out = mstcn(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--train-videos",
        "5",
        "--test-videos",
        "3",
        "--mean-length",
        "80",
        "--mean-duration",
        "15",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_predict_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    synth(&data);
    let d = data.to_str().unwrap();
    let r = run.to_str().unwrap();

    let out = mstcn(&[
        "train", "--dataset", d, "--out-dir", r, "--stages", "2", "--layers", "3", "--filters", "8", "--epochs",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.resolved", "train.log", "final.ckpt", "report.txt", "report.kv"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let resolved = fs::read_to_string(run.join("config.resolved")).unwrap();
    assert!(resolved.contains("epochs = 2"), "{resolved}");
    assert_eq!(fs::read_to_string(run.join("train.log")).unwrap().lines().filter(|l| l.starts_with("epoch")).count(), 2);

    let ckpt = run.join("final.ckpt");
    let eval_dir = tmp.path().join("eval_ckpt");
    let out = mstcn(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--dataset",
        d,
        "--out-dir",
        eval_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_kv(&eval_dir.join("report.kv")), read_kv(&run.join("report.kv")));

    let preds = tmp.path().join("preds");
    for id in fs::read_to_string(data.join("test.split")).unwrap().split_whitespace() {
        let out = mstcn(&[
            "predict",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--features",
            data.join("features").join(format!("{id}.fmat")).to_str().unwrap(),
            "--mapping",
            data.join("mapping.txt").to_str().unwrap(),
            "--out",
            preds.join(format!("{id}.txt")).to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let eval_pred = tmp.path().join("eval_pred");
    let out = mstcn(&[
        "eval",
        "--predictions",
        preds.to_str().unwrap(),
        "--dataset",
        d,
        "--out-dir",
        eval_pred.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_kv(&eval_pred.join("report.kv")), read_kv(&eval_dir.join("report.kv")));
}

#[test]
fn ground_truth_scores_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let out_dir = tmp.path().join("gt");
    let out = mstcn(&[
        "eval",
        "--predictions",
        data.join("groundTruth").to_str().unwrap(),
        "--dataset",
        data.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let kv = read_kv(&out_dir.join("report.kv"));
    for key in ["overall.f1@10", "overall.f1@25", "overall.f1@50", "overall.edit", "overall.acc"] {
        assert_eq!(kv[key], "100.000000", "{key}");
    }
}

#[test]
fn gradcheck_subcommand_passes() {
    let out = mstcn(&["gradcheck"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("smoothing kl"), "{text}");
    assert!(text.contains("stage2.layer3.w1"), "{text}");
}

#[test]
fn exit_codes() {
    assert_eq!(code(&mstcn(&["no-such-command"])), 1);
    assert_eq!(code(&mstcn(&["train", "--no-such-key", "3"])), 1);
    assert_eq!(code(&mstcn(&["train", "--epochs", "many"])), 1);

    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent");
    assert_eq!(code(&mstcn(&["train", "--dataset", missing.to_str().unwrap()])), 2);

    let bad = tmp.path().join("bad.fmat");
    fs::write(&bad, b"XMAT\x01\x00").unwrap();
    let out = mstcn(&[
        "predict",
        "--checkpoint",
        bad.to_str().unwrap(),
        "--features",
        bad.to_str().unwrap(),
        "--mapping",
        bad.to_str().unwrap(),
        "--out",
        tmp.path().join("o.txt").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn shipped_configs_load() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let train = mstcn::config::RunConfig::load(configs.join("train_default.conf")).unwrap();
    train.validate().unwrap();
    assert_eq!((train.stages, train.layers, train.epochs), (4, 10, 20));
    let synth = mstcn::config::SynthFileConfig::load(configs.join("synth_default.conf")).unwrap();
    let gen = synth.generator().unwrap();
    assert_eq!((gen.num_classes, gen.feature_dim, gen.num_videos), (8, 16, 80));
}
