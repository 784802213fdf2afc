//! Training and testing at reduced frame rates. Videos are subsampled by
//! keeping every k-th frame; evaluation is on the subsampled labels.
//!
//!     cargo run --release --example temporal_resolution [epochs]

use anyhow::Result;
use mstcn::data::{generate_synthetic, temporal_downsample};
use mstcn::train::{evaluate_model, train, TrainOptions};
use mstcn::{AdamState, EvalOptions, LossConfig, ModelConfig, ModelParams, SequenceSample, SynthConfig};

fn main() -> Result<()> {
    let epochs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(15);
    let synth = SynthConfig::with_random_structure(8, 16, 80, 600.0, 60.0, 1.0, 6.0, 7)?;
    let (_, mut full_train) = generate_synthetic(&synth)?;
    let full_test = full_train.split_off(60);
    let opts = TrainOptions {
        loss: LossConfig::default(),
        epochs,
        seed: 1,
    };

    for factor in [1, 2, 4, 8] {
        let down = |v: &[SequenceSample]| -> mstcn::Result<Vec<SequenceSample>> {
            v.iter().map(|s| temporal_downsample(s, factor)).collect()
        };
        let (train_set, test_set) = (down(&full_train)?, down(&full_test)?);
        let mut cfg = ModelConfig::new(16, 8);
        cfg.filters = 32;
        let mut model = ModelParams::init(&cfg, 1)?;
        let mut adam = AdamState::new(&model, 5e-4);
        train(&mut model, &mut adam, &train_set, &opts, |_, _, _| Ok(()))?;
        let (_, r) = evaluate_model(&model, &test_set, &EvalOptions::default(), None)?;
        println!("every {factor} frame(s), {:>4} frames/video  {}", test_set[0].len(), r.summary());
    }
    Ok(())
}
