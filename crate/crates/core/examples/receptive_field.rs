//! Measure which output frames respond to a change in one input frame and
//! compare with the closed form 2^(L+1) - 1.

use anyhow::Result;
use mstcn::layers::receptive_field;
use mstcn::model::ss_tcn_forward;
use mstcn::{ModelConfig, ModelParams, Tensor};

fn main() -> Result<()> {
    println!("layers  measured  formula");
    for layers in 1..=8usize {
        let mut cfg = ModelConfig::new(4, 3);
        cfg.stages = 1;
        cfg.layers = layers;
        cfg.filters = 8;
        let model = ModelParams::init(&cfg, 2)?;
        let t = (1 << (layers + 1)) + 64;
        let x = Tensor::new(&[4, t], 0.1)?;
        let mut bumped = x.clone();
        for c in 0..4 {
            bumped.data_mut()[c * t + t / 2] = 1.0;
        }
        let (a, _) = ss_tcn_forward(&x, &model.stages[0], 0.0, false, 0)?;
        let (b, _) = ss_tcn_forward(&bumped, &model.stages[0], 0.0, false, 0)?;
        let changed = (0..t)
            .filter(|&f| (0..3).any(|c| a.at2(c, f) != b.at2(c, f)))
            .count();
        println!("{layers:>6}  {changed:>8}  {:>7}", receptive_field(layers as u32)?);
    }
    Ok(())
}
