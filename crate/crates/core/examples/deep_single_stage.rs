//! A single stage as deep as four stacked stages (40 layers, dilations
//! restarting at 1 every ten layers) against the four-stage model with the
//! same layer count.
//!
//!     cargo run --release --example deep_single_stage [epochs]

use anyhow::Result;
use mstcn::data::generate_synthetic;
use mstcn::model::wrapping_dilations;
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

    let mut deep = ModelConfig::new(16, 8);
    deep.stages = 1;
    deep.layers = 40;
    deep.dilations = Some(wrapping_dilations(40, 10));
    deep.filters = 32;
    let mut multi = ModelConfig::new(16, 8);
    multi.filters = 32;

    for (name, cfg) in [("1 stage x 40 layers", deep), ("4 stages x 10 layers", multi)] {
        let mut model = ModelParams::init(&cfg, 1)?;
        let mut adam = AdamState::new(&model, 5e-4);
        train(&mut model, &mut adam, &train_set, &opts, |_, _, _| Ok(()))?;
        let (_, r) = evaluate_model(&model, &test_set, &EvalOptions::default(), None)?;
        println!("{name:<21} {} params  {}", model.num_parameters(), r.summary());
    }
    Ok(())
}
