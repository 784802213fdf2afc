//! Generate a small synthetic corpus, train a two-stage model for a few
//! epochs and score it.
//!
//!     cargo run --release --example quickstart

use anyhow::Result;
use mstcn::data::{generate_synthetic, SynthConfig};
use mstcn::model::predict;
use mstcn::train::{evaluate_model, train_epoch};
use mstcn::{AdamState, EvalOptions, LossConfig, ModelConfig, ModelParams};

fn main() -> Result<()> {
    let synth = SynthConfig::with_random_structure(4, 8, 24, 200.0, 25.0, 1.5, 1.0, 3)?;
    let (mapping, mut train) = generate_synthetic(&synth)?;
    let test = train.split_off(18);

    let mut cfg = ModelConfig::new(8, mapping.len());
    cfg.stages = 2;
    cfg.layers = 6;
    cfg.filters = 16;
    let mut model = ModelParams::init(&cfg, 1)?;
    let mut adam = AdamState::new(&model, 5e-3);
    println!("{} parameters", model.num_parameters());

    let loss = LossConfig::default();
    for epoch in 1..=8 {
        let stats = train_epoch(&mut model, &mut adam, &train, &loss, 1, epoch)?;
        println!("{}", stats.log_line());
    }

    let (_, report) = evaluate_model(&model, &test, &EvalOptions::default(), None)?;
    println!("test: {}", report.summary());

    let video = &test[0];
    let pred = predict(&video.features, &model, None)?;
    let show = |labels: &[usize]| -> String {
        labels.iter().step_by(4).map(|&c| char::from(b'a' + c as u8)).collect()
    };
    println!("{}:\n  truth {}\n  pred  {}", video.id, show(&video.labels), show(&pred));
    Ok(())
}
