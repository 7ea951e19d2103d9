//! Self-supervised pretraining with the hybrid reconstruction and
//! pair-classification objective `L = γ·L_a + L_c`.
//!
//! Each window `x` yields two augmented views. Both views are encoded and
//! decoded; the reconstruction target of either view is `x` itself. Half
//! the pairs fed to the pair head hold the two views of one window, the
//! other half pair views of different windows.

mod augment;
mod pairs;
mod pretrain;

pub use augment::{augment, make_views, AugmentConfig, ViewPair};
pub use pairs::{
    build_pair_batch, hybrid_loss, plan_pairs, HybridLoss, HybridLossValue, PairBatch, PairPlan, DIFFERENT, SAME,
};
pub use pretrain::{pair_accuracy, pretrain, pretrain_step, PretrainConfig, PRETRAIN_GROUPS};

use thiserror::Error;

use crate::autodiff::TensorError;
use crate::model::ModelError;
use crate::train::TrainError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SslError {
    #[error("pair batches need at least 2 windows, got {0}")]
    BatchTooSmall(usize),
    #[error("gamma {0} outside [0, 1]")]
    Gamma(f64),
    #[error("{have} windows available, a batch needs {need}")]
    NotEnoughWindows { have: usize, need: usize },
    #[error("pretraining needs decoder and pair heads")]
    MissingHeads,
    #[error("invalid augmentation: {0}")]
    Config(String),
    #[error("loss became non-finite ({0})")]
    NonFinite(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[cfg(test)]
mod tests;
