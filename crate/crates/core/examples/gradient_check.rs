//! Compare every hand-written backward pass against central finite
//! differences, for both smoothing losses.
//!
//!     cargo run --release --example gradient_check [seed]

use anyhow::{bail, Result};
use mstcn::commands::{cmd_gradcheck, gradcheck_sweep, GradcheckOptions};

fn main() -> Result<()> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let opts = GradcheckOptions {
        seed,
        ..GradcheckOptions::default()
    };
    let m = &opts.model;
    println!(
        "S={} L={} D={} C={} D_in={} T={} seed {seed}",
        m.stages, m.layers, m.filters, m.classes, m.input_dim, opts.frames
    );
    let mut failed = 0;
    for (loss, report) in cmd_gradcheck(&opts, &gradcheck_sweep())? {
        println!("\n{} lambda={} tau={}", loss.smoothing, loss.lambda, loss.tau);
        print!("{}", report.render());
        failed += report.failures().len();
    }
    if failed > 0 {
        bail!("{failed} tensors disagree with finite differences");
    }
    Ok(())
}
