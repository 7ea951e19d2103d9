use serde::{Deserialize, Serialize};

use super::NnError;

/// Shape and regularization settings for the encoder stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Window length T.
    pub seq_len: usize,
    /// Sensor channel count V.
    pub input_dim: usize,
    pub dropout_rate: f64,
    pub use_positional_encoding: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            n_layers: 2,
            d_model: 64,
            n_heads: 4,
            d_ff: 128,
            seq_len: 32,
            input_dim: 1,
            dropout_rate: 0.1,
            use_positional_encoding: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let dims = [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("seq_len", self.seq_len),
            ("input_dim", self.input_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(NnError::Config(format!("{name} must be at least 1")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(NnError::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NnError::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}
