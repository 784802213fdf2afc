//! Save model and optimizer state mid-run, reload, and continue. The resumed
//! run ends bitwise identical to an uninterrupted one.

use anyhow::{ensure, Result};
use mstcn::checkpoint::{load_checkpoint_for, save_checkpoint};
use mstcn::data::generate_synthetic;
use mstcn::train::train_epoch;
use mstcn::{AdamState, LossConfig, ModelConfig, ModelParams, SynthConfig};

fn main() -> Result<()> {
    let synth = SynthConfig::with_random_structure(4, 8, 6, 120.0, 20.0, 1.0, 1.0, 5)?;
    let (_, samples) = generate_synthetic(&synth)?;
    let mut cfg = ModelConfig::new(8, 4);
    cfg.stages = 2;
    cfg.layers = 4;
    cfg.filters = 12;
    let loss = LossConfig::default();

    let mut straight = ModelParams::init(&cfg, 3)?;
    let mut adam = AdamState::new(&straight, 1e-3);
    for epoch in 1..=4 {
        train_epoch(&mut straight, &mut adam, &samples, &loss, 3, epoch)?;
    }

    let dir = std::env::temp_dir().join("mstcn_checkpoint_resume");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("epoch2.ckpt");
    let mut model = ModelParams::init(&cfg, 3)?;
    let mut adam = AdamState::new(&model, 1e-3);
    for epoch in 1..=2 {
        train_epoch(&mut model, &mut adam, &samples, &loss, 3, epoch)?;
    }
    save_checkpoint(&path, &model, Some(&adam))?;
    println!("saved {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());

    let ckpt = load_checkpoint_for(&path, &cfg)?;
    let (mut model, mut adam) = (ckpt.model, ckpt.optimizer.expect("optimizer state"));
    for epoch in 3..=4 {
        let stats = train_epoch(&mut model, &mut adam, &samples, &loss, 3, epoch)?;
        println!("{}", stats.log_line());
    }
    ensure!(model == straight, "resumed run diverged");
    println!("resumed run matches the uninterrupted one");
    Ok(())
}
