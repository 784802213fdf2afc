//! Classification loss alone against adding the truncated MSE or the KL
//! smoothing term, on a four-stage model.
//!
//!     cargo run --release --example loss_ablation [epochs]

use anyhow::Result;
use mstcn::data::generate_synthetic;
use mstcn::train::{evaluate_model, train, TrainOptions};
use mstcn::{AdamState, EvalOptions, LossConfig, ModelConfig, ModelParams, SmoothingKind, SynthConfig};

fn main() -> Result<()> {
    let epochs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let synth = SynthConfig::with_random_structure(8, 16, 80, 600.0, 60.0, 1.0, 6.0, 7)?;
    let (_, mut train_set) = generate_synthetic(&synth)?;
    let test_set = train_set.split_off(60);

    let variants = [
        ("cls only", 0.0, SmoothingKind::None),
        ("cls + t_mse", 0.15, SmoothingKind::TMse),
        ("cls + kl", 0.15, SmoothingKind::Kl),
    ];
    for (name, lambda, smoothing) in variants {
        let mut cfg = ModelConfig::new(16, 8);
        cfg.filters = 32;
        let mut model = ModelParams::init(&cfg, 1)?;
        let mut adam = AdamState::new(&model, 5e-4);
        let opts = TrainOptions {
            loss: LossConfig { lambda, tau: 4.0, smoothing },
            epochs,
            seed: 1,
        };
        train(&mut model, &mut adam, &train_set, &opts, |_, _, _| Ok(()))?;
        let (_, r) = evaluate_model(&model, &test_set, &EvalOptions::default(), None)?;
        println!("{name:<12} {}  ({:.1} segments/video)", r.summary(), r.pred_segments_per_video());
    }
    Ok(())
}
