//! Full networks assembled from the encoder and MLP heads.
//!
//! The recognition model is `encoder → pool → classifier`. The pretraining
//! model shares the encoder and adds a per-timestep decoder (the
//! reconstruction path `y = g(f(x))`) and a pair head that scores the
//! concatenation of two pooled encodings.

mod params;

pub use params::{MlpHead, ModelConfig, ModelParams, ParamGroup, Pooling};

use thiserror::Error;

use crate::autodiff::{Tape, Tensor, TensorError, Var};
use crate::nn::{encoder_forward, time_distributed, Dropout, NnError};
use crate::SeededRng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("model has no {0} head")]
    MissingHead(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Encoder output: the contextual sequence and its pooled summary.
#[derive(Debug, Clone, Copy)]
pub struct Encoding<'t> {
    /// `[B, T, d_model]`
    pub sequence: Var<'t>,
    /// `[B, d_model]`
    pub pooled: Var<'t>,
}

impl<'t> ModelParams<Var<'t>> {
    /// The encoder `f`: window batch `[B, T, V]` to sequence and pooled encodings.
    pub fn encode(
        &self,
        x: Var<'t>,
        cfg: &ModelConfig,
        dropout: Option<&mut Dropout<'_>>,
    ) -> Result<Encoding<'t>, ModelError> {
        let sequence = encoder_forward(x, &self.encoder, &cfg.encoder, dropout)?;
        let pooled = match cfg.pooling {
            Pooling::Mean => sequence.mean_axis(1)?,
            Pooling::Max => sequence.max_axis(1)?,
            Pooling::First => sequence.select_axis(1, 0)?,
        };
        Ok(Encoding { sequence, pooled })
    }

    /// Unnormalized activity scores `[B, C]`.
    pub fn class_logits(&self, enc: &Encoding<'t>) -> Result<Var<'t>, ModelError> {
        Ok(self.classifier.forward(&enc.pooled)?)
    }

    /// The decoder `g`: per-timestep reconstruction `[B, T, V]` in (0, 1).
    pub fn decode(&self, enc: &Encoding<'t>) -> Result<Var<'t>, ModelError> {
        let head = self.decoder.as_ref().ok_or(ModelError::MissingHead("decoder"))?;
        let hidden = time_distributed(enc.sequence, &head.w1, &head.b1)?.gelu();
        Ok(time_distributed(hidden, &head.w2, &head.b2)?.sigmoid())
    }

    /// Logits over {different source, same source} for the concatenation
    /// `[h_i ‖ h_j]`. Not symmetric in its arguments.
    pub fn pair_logits(&self, h_i: &Var<'t>, h_j: &Var<'t>) -> Result<Var<'t>, ModelError> {
        let head = self.pair.as_ref().ok_or(ModelError::MissingHead("pair"))?;
        let joined = h_i.concat_cols(h_j)?;
        let expected = head.w1.shape()[0];
        if joined.shape()[1] != expected {
            return Err(TensorError::ShapeMismatch {
                op: "pair_logits",
                lhs: joined.shape(),
                rhs: head.w1.shape(),
            }
            .into());
        }
        Ok(head.forward(&joined)?)
    }
}

/// Class probabilities `[B, C]` for a window batch, evaluation mode.
pub fn classify(params: &ModelParams, cfg: &ModelConfig, x: &Tensor) -> Result<Tensor, ModelError> {
    let tape = Tape::new();
    let bound = params.map(|t| tape.constant(t));
    let enc = bound.encode(tape.constant(x), cfg, None)?;
    Ok(bound.class_logits(&enc)?.softmax().to_tensor())
}

/// Index of the largest entry in each row.
pub fn argmax_rows(probs: &Tensor) -> Vec<usize> {
    let width = *probs.shape().last().unwrap();
    probs
        .data()
        .chunks_exact(width)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, (i, &v)| if v > best.1 { (i, v) } else { best },
                )
                .0
        })
        .collect()
}

/// Keeps the pretrained encoder, drops the decoder and pair heads, and
/// initializes a fresh classifier for `target`.
pub fn transfer_encoder(
    pretrained: &ModelParams,
    pretrained_cfg: &ModelConfig,
    target: &ModelConfig,
    rng: &mut SeededRng,
) -> Result<ModelParams, ModelError> {
    target.validate()?;
    if !pretrained_cfg.encoder_compatible(target) {
        return Err(ModelError::Config(format!(
            "pretrained encoder {:?} does not match target {:?}",
            pretrained_cfg.encoder, target.encoder
        )));
    }
    let mut encoder = pretrained.encoder.clone();
    encoder.visit_mut(&mut |_, t| t.zero_grad());
    let classifier = MlpHead::init(target.encoder.d_model, target.head_hidden, target.n_classes, rng);
    let out = ModelParams {
        encoder,
        classifier,
        decoder: None,
        pair: None,
    };
    out.check_shapes(target)?;
    Ok(out)
}
