//! Joint forecasting/reconstruction training, gradient verification and
//! checkpoint persistence.

mod checkpoint;
pub mod gradcheck;
mod loss;
mod optim;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, StaticContext, FORMAT_VERSION};
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport, GradTarget, Reference};
pub use loss::{joint_loss, joint_loss_grad, LossGrad};
pub use optim::{clip_grad_norm, Adam};
pub use train::{dataset_loss, train, train_model, EpochStats, TrainConfig, TrainHistory, TrainOutcome};
