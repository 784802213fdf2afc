//! Multi-stage temporal convolutional networks for frame-wise action
//! segmentation.
//!
//! Every forward pass has a hand-written backward pass, checked against
//! central finite differences. The crate covers:
//!
//! - [`tensor`]: dense `f64` storage and the finite-difference oracle
//! - [`layers`]: dilated residual layers, 1x1 convolutions, softmax head
//! - [`model`]: single- and multi-stage networks, [`checkpoint`] persistence
//! - [`losses`]: cross entropy, truncated MSE and KL smoothing
//! - Adam in [`optim`]
//! - [`metrics`]: frame accuracy, segmental edit score, F1@k
//! - [`data`]: feature/label files, synthetic data, downsampling
//! - [`train`], [`gradcheck`], [`config`], [`commands`]: the training harness
//!   behind the `mstcn` binary
//!
//! See the crate's `examples/` directory for runnable walkthroughs.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use data::{ClassMapping, SequenceSample, SynthConfig};
pub use error::{Error, Result};
pub use losses::{LossConfig, SmoothingKind};
pub use metrics::{EvalOptions, EvalReport, Segment};
pub use model::{ModelConfig, ModelParams};
pub use optim::AdamState;
pub use tensor::Tensor;
