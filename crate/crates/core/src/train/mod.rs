//! Optimization, supervised fine-tuning, evaluation and checkpoints.

mod checkpoint;
mod finetune;
mod metrics;
mod optim;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint, CheckpointError, CheckpointMeta, ParamEntry,
    WindowSpec, FORMAT_VERSION, MAGIC,
};
pub use finetune::{finetune, label_subset, EpochLog, FinetuneConfig, FinetuneOutcome, LOG_HEADER};
pub use metrics::{ClassMetrics, MetricsReport};
pub use optim::{Adam, AdamConfig};

use thiserror::Error;

use crate::autodiff::{Tape, TensorError};
use crate::data::{stack_windows, DataError, SampleWindow};
use crate::model::{argmax_rows, ModelConfig, ModelError, ModelParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("label {label} outside the {classes} model classes")]
    Label { label: usize, classes: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("optimizer state mismatch: {0}")]
    Optimizer(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

const EVAL_BATCH: usize = 256;

/// Deterministic evaluation pass with dropout disabled. Does not touch
/// `params`.
pub fn evaluate(
    params: &ModelParams,
    cfg: &ModelConfig,
    windows: &[SampleWindow],
    classes: &[String],
) -> Result<MetricsReport, TrainError> {
    if windows.is_empty() {
        return Err(TrainError::Empty("evaluation set"));
    }
    if classes.len() != cfg.n_classes {
        return Err(TrainError::Config(format!(
            "{} class names for a {}-class model",
            classes.len(),
            cfg.n_classes
        )));
    }
    let mut loss_sum = 0.0;
    let mut truth = Vec::with_capacity(windows.len());
    let mut predicted = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(EVAL_BATCH) {
        let batch: Vec<&SampleWindow> = chunk.iter().collect();
        let (x, labels) = stack_windows(&batch);
        if let Some(&label) = labels.iter().find(|&&l| l >= cfg.n_classes) {
            return Err(TrainError::Label {
                label,
                classes: cfg.n_classes,
            });
        }
        let tape = Tape::new();
        let bound = params.map(|t| tape.constant(t));
        let enc = bound.encode(tape.constant_owned(x), cfg, None)?;
        let logits = bound.class_logits(&enc)?;
        loss_sum += logits.cross_entropy(&labels)?.item() * labels.len() as f64;
        predicted.extend(argmax_rows(&logits.to_tensor()));
        truth.extend(labels);
    }
    Ok(MetricsReport::from_predictions(
        &truth,
        &predicted,
        classes,
        loss_sum / windows.len() as f64,
    ))
}
