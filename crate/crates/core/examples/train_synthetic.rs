//! The full file-based workflow: write a synthetic dataset, train from a
//! configuration, evaluate the saved checkpoint and list the run directory.
//!
//!     cargo run --release --example train_synthetic [work_dir]

use std::path::PathBuf;

use anyhow::Result;
use mstcn::commands::{cmd_eval, cmd_synth, cmd_train, EvalSource, FINAL_CHECKPOINT};
use mstcn::config::{RunConfig, SynthFileConfig};

fn main() -> Result<()> {
    let work: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mstcn_train_synthetic"));

    let mut synth = SynthFileConfig::default();
    synth.train_videos = 20;
    synth.test_videos = 8;
    synth.mean_length = 300.0;
    synth.mean_duration = 40.0;
    synth.noise_std = 2.0;
    cmd_synth(&synth, &work.join("data"))?;

    let mut cfg = RunConfig::default();
    cfg.dataset = Some(work.join("data"));
    cfg.out_dir = work.join("run");
    cfg.stages = 3;
    cfg.layers = 8;
    cfg.filters = 24;
    cfg.lr = 2e-3;
    cfg.epochs = 10;
    cfg.group_by_duration = true;
    let outcome = cmd_train(&cfg)?;
    for e in &outcome.history {
        println!("{}", e.log_line());
    }
    println!("test: {}", outcome.report.summary());

    let mut eval = cfg.clone();
    eval.out_dir = work.join("eval_stage1");
    let source = EvalSource::Checkpoint {
        path: cfg.out_dir.join(FINAL_CHECKPOINT),
        stage: Some(1),
    };
    let (_, stage1) = cmd_eval(&eval, &source)?;
    println!("stage 1 only: {}", stage1.summary());

    let mut files: Vec<String> = std::fs::read_dir(&cfg.out_dir)?
        .map(|e| Ok(e?.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_>>()?;
    files.sort();
    println!("{}: {}", cfg.out_dir.display(), files.join(" "));
    Ok(())
}
