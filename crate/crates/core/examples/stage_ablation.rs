//! One stage against two and four stages on the ambiguous synthetic corpus.
//! Frame accuracy stays close while the single stage over-segments.
//!
//!     cargo run --release --example stage_ablation [epochs]

use anyhow::Result;
use mstcn::data::generate_synthetic;
use mstcn::train::{evaluate_model, train, TrainOptions};
use mstcn::{AdamState, EvalOptions, LossConfig, ModelConfig, ModelParams, SynthConfig};

fn main() -> Result<()> {
    let epochs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let synth = SynthConfig::with_random_structure(8, 16, 80, 600.0, 60.0, 1.0, 6.0, 7)?;
    let (_, mut train_set) = generate_synthetic(&synth)?;
    let test_set = train_set.split_off(60);
    let opts = TrainOptions {
        loss: LossConfig::default(),
        epochs,
        seed: 1,
    };

    for stages in [1, 2, 4] {
        let mut cfg = ModelConfig::new(16, 8);
        cfg.stages = stages;
        cfg.filters = 32;
        let mut model = ModelParams::init(&cfg, 1)?;
        let mut adam = AdamState::new(&model, 5e-4);
        train(&mut model, &mut adam, &train_set, &opts, |_, _, _| Ok(()))?;
        let (_, r) = evaluate_model(&model, &test_set, &EvalOptions::default(), None)?;
        println!("{stages} stage(s)  {}", r.summary());
    }
    Ok(())
}
