//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Operations are recorded on a [`Tape`] as they execute. Calling
//! [`Tape::backward`] on a scalar result walks the tape in reverse and
//! returns [`Gradients`] for every node that depends on a trainable leaf.

mod gradcheck;
mod kernel;
mod ops;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckEntry, GradCheckReport};
pub use ops::gelu_scalar;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("data of length {len} does not fit shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("invalid shape {0:?}: every dimension must be at least 1")]
    InvalidShape(Vec<usize>),
    #[error("{op} needs a tensor of rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("axis {axis} out of range for shape {shape:?}")]
    Axis { axis: usize, shape: Vec<usize> },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("variable does not belong to this tape")]
    ForeignVar,
    #[error("{0} needs at least one input")]
    Empty(&'static str),
}
