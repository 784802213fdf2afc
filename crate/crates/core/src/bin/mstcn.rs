use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mstcn::commands::{
    cmd_eval, cmd_gradcheck, cmd_predict, cmd_synth, cmd_train, gradcheck_sweep, EvalSource,
    GradcheckOptions,
};
use mstcn::config::{RunConfig, SynthFileConfig};
use mstcn::{Error, LossConfig};

#[derive(Parser)]
#[command(name = "mstcn", version, about = "Multi-stage TCN action segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Run configuration file (`key = value` with sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any configuration key as `--key value`, e.g. `--lambda 0 --stages 1`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    rest: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes config.resolved, train.log, final.ckpt, best.ckpt and reports.
    Train(Overrides),
    /// Evaluate a checkpoint or a predictions directory on the test split.
    Eval {
        #[arg(long, conflicts_with = "predictions")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Score the output of this stage (1-based) instead of the last.
        #[arg(long)]
        stage: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write per-frame class names for one feature file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stage: Option<usize>,
        #[arg(long, default_value_t = 1)]
        downsample: usize,
    },
    /// Check every backward pass against finite differences on a tiny model.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        frames: usize,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

/// Applies `--key value` / `--key=value` pairs; a bare `--flag` means `true`.
fn apply_overrides(rest: &[String], mut set: impl FnMut(&str, &str) -> mstcn::Result<()>) -> mstcn::Result<()> {
    let mut i = 0;
    while i < rest.len() {
        let arg = rest[i]
            .strip_prefix("--")
            .ok_or_else(|| Error::InvalidArgument(format!("expected --key, got {:?}", rest[i])))?;
        let key_value = match arg.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => match rest.get(i + 1) {
                Some(v) if !v.starts_with("--") => {
                    i += 1;
                    (arg.to_string(), v.clone())
                }
                _ => (arg.to_string(), "true".to_string()),
            },
        };
        set(&key_value.0.replace('-', "_"), &key_value.1)?;
        i += 1;
    }
    Ok(())
}

fn run_config(o: &Overrides) -> mstcn::Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    apply_overrides(&o.rest, |k, v| cfg.set(k, v))?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(o) => {
            let cfg = run_config(&o)?;
            let out = cmd_train(&cfg)?;
            for e in &out.history {
                println!("{}", e.log_line());
            }
            println!("{}", out.report.summary());
            println!("run directory: {}", out.run_dir.display());
        }
        Command::Eval {
            checkpoint,
            predictions,
            stage,
            overrides,
        } => {
            let cfg = run_config(&overrides)?;
            let source = match (checkpoint, predictions) {
                (Some(path), None) => EvalSource::Checkpoint { path, stage },
                (None, Some(dir)) => EvalSource::Predictions(dir),
                _ => return Err(Error::InvalidArgument("pass --checkpoint or --predictions".into()).into()),
            };
            let (_, overall) = cmd_eval(&cfg, &source)?;
            println!("{}", overall.summary());
        }
        Command::Predict {
            checkpoint,
            features,
            mapping,
            out,
            stage,
            downsample,
        } => {
            let labels = cmd_predict(&checkpoint, &features, &mapping, &out, stage, downsample)?;
            println!("wrote {} frames to {}", labels.len(), out.display());
        }
        Command::Gradcheck { seed, frames } => {
            let opts = GradcheckOptions {
                seed,
                frames,
                ..GradcheckOptions::default()
            };
            let mut failed = false;
            for (loss, report) in cmd_gradcheck(&opts, &gradcheck_sweep())? {
                let LossConfig { lambda, tau, smoothing } = loss;
                println!("== smoothing {smoothing}, lambda {lambda}, tau {tau}");
                print!("{}", report.render());
                failed |= !report.passed();
            }
            if failed {
                return Err(Error::Numeric("gradient check failed".into()).into());
            }
        }
        Command::Synth { out, overrides } => {
            let mut cfg = match &overrides.config {
                Some(p) => SynthFileConfig::load(p)?,
                None => SynthFileConfig::default(),
            };
            apply_overrides(&overrides.rest, |k, v| cfg.set(k, v))?;
            let samples = cmd_synth(&cfg, &out)?;
            println!("wrote {} videos to {}", samples.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Error>().map_or(1, Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
