//! Losses, optimizer, training loop, gradient checking and checkpoints.

mod checkpoint;
mod gradcheck;
mod loss;
mod optim;
mod trainer;

pub use checkpoint::{config_hash, Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use gradcheck::{grad_check, grad_check_with, relative_error, GradCheckConfig, GradCheckEntry, GradCheckReport};
pub use loss::{
    attr_bce_loss, attr_bce_loss_with_grad, bce_row, ce_row, obj_ce_loss, obj_ce_loss_with_grad,
    pair_bce_loss, pair_bce_loss_with_grad, total_loss, AttrTargets,
};
pub use optim::{AdamW, AdamWConfig};
pub use trainer::{epoch_order, train_epoch, EpochSummary, OptimizerKind, StepRecord, Trainer, TrainConfig};
