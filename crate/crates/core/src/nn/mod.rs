//! Transformer encoder building blocks.

mod config;
mod layers;
mod params;

pub use config::EncoderConfig;
pub use layers::{
    attention_weights, encoder_forward, encoder_layer, input_projection, multi_head_attention,
    multi_head_attention_with_weights, positional_encoding, scaled_dot_attention, Dropout, LAYER_NORM_EPS,
};
pub use params::{xavier_uniform, EncoderParams, LayerParams};

pub(crate) use layers::time_distributed;
pub(crate) use params::zeros;

use thiserror::Error;

use crate::autodiff::TensorError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[cfg(test)]
mod tests;
