//! Frame accuracy against the segmental metrics on hand-made predictions.
//! A few flickering frames barely move accuracy but wreck edit and F1.

use anyhow::Result;
use mstcn::metrics::{evaluate, segments_from_labels, EvalOptions};

fn runs(spec: &[(usize, usize)]) -> Vec<usize> {
    spec.iter().flat_map(|&(c, n)| std::iter::repeat(c).take(n)).collect()
}

fn main() -> Result<()> {
    let gt = runs(&[(0, 40), (1, 30), (2, 50), (1, 20)]);

    let mut flicker = gt.clone();
    for t in [5, 17, 29, 52, 61, 80, 95, 110, 133] {
        flicker[t] = (flicker[t] + 1) % 3;
    }
    let shifted = runs(&[(0, 48), (1, 30), (2, 50), (1, 12)]);
    let merged = runs(&[(0, 40), (2, 100)]);

    let opts = EvalOptions::default();
    println!("ground truth: {} segments", segments_from_labels(&gt).len());
    for (name, pred) in [("flicker", &flicker), ("shifted", &shifted), ("merged", &merged)] {
        let r = evaluate(pred, &gt, &opts)?;
        println!("{name:<8} {}", r.summary());
    }
    Ok(())
}
