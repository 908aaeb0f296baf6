//! Convolutional score model trained with the denoising score-matching loss,
//! and a kernel-density score used as an independent check.

pub mod arch;
pub mod checkpoint;
pub mod kernel;
pub mod loss;
pub mod net;
pub mod train;

pub use arch::{Activation, Architecture, ConvSpec, Head, InputFeature};
pub use checkpoint::Checkpoint;
pub use kernel::{kernel_score, Bandwidth};
pub use loss::{ardae_loss, LossEval, Perturbation};
pub use net::ScoreModel;
pub use train::{train, train_with, AdamW, EpochReport, SigmaMode, TrainConfig, TrainHistory, TrainOutcome};
