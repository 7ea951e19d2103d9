use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::augment::AugmentConfig;
use super::pairs::{build_pair_batch, hybrid_loss, HybridLossValue};
use super::SslError;
use crate::autodiff::{Tape, Tensor};
use crate::data::SampleWindow;
use crate::model::{argmax_rows, ModelConfig, ModelParams, ParamGroup};
use crate::nn::Dropout;
use crate::train::{Adam, AdamConfig};
use crate::SeededRng;

/// Parameters updated by pretraining. The classifier is left alone.
pub const PRETRAIN_GROUPS: &[ParamGroup] = &[ParamGroup::Encoder, ParamGroup::Decoder, ParamGroup::Pair];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub steps: usize,
    /// Windows per step, `N`; each step encodes `2N` views.
    pub batch_size: usize,
    pub gamma: f64,
    pub augment: AugmentConfig,
    pub optimizer: AdamConfig,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 16,
            gamma: 0.5,
            augment: AugmentConfig::default(),
            optimizer: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// One gradient step on the hybrid loss over encoder, decoder and pair head.
pub fn pretrain_step(
    params: &mut ModelParams,
    cfg: &ModelConfig,
    windows: &[&Tensor],
    gamma: f64,
    aug: &AugmentConfig,
    adam: &mut Adam,
    rng: &mut SeededRng,
) -> Result<HybridLossValue, SslError> {
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let mut view_rng = SeededRng::from_rng(&mut *rng).expect("chacha reseed");
    let mut dropout = Dropout::new(cfg.encoder.dropout_rate, rng);
    let pb = build_pair_batch(windows, &bound, cfg, aug, &mut view_rng, Some(&mut dropout))?;
    let loss = hybrid_loss(&pb, gamma)?;
    let value = loss.value();
    assert_eq!(value.total, value.gamma * value.recon + value.pair, "loss identity");
    if !value.total.is_finite() {
        return Err(SslError::NonFinite(value.total));
    }
    let grads = tape.backward(loss.total)?;
    params.zero_grad();
    params.accumulate_grads(&bound, &grads, PRETRAIN_GROUPS)?;
    adam.step(&mut params.select_mut(PRETRAIN_GROUPS))?;
    Ok(value)
}

/// Runs `pcfg.steps` pretraining steps, each on `batch_size` distinct
/// windows drawn uniformly. Returns the loss of every step.
pub fn pretrain(
    params: &mut ModelParams,
    cfg: &ModelConfig,
    windows: &[SampleWindow],
    pcfg: &PretrainConfig,
    mut on_step: impl FnMut(usize, &HybridLossValue),
) -> Result<Vec<HybridLossValue>, SslError> {
    if params.decoder.is_none() || params.pair.is_none() {
        return Err(SslError::MissingHeads);
    }
    if !(0.0..=1.0).contains(&pcfg.gamma) {
        return Err(SslError::Gamma(pcfg.gamma));
    }
    pcfg.augment.validate().map_err(SslError::Config)?;
    if pcfg.batch_size < 2 {
        return Err(SslError::BatchTooSmall(pcfg.batch_size));
    }
    if windows.len() < pcfg.batch_size {
        return Err(SslError::NotEnoughWindows {
            have: windows.len(),
            need: pcfg.batch_size,
        });
    }
    let mut rng = SeededRng::seed_from_u64(pcfg.seed);
    let mut adam = Adam::new(pcfg.optimizer);
    let mut history = Vec::with_capacity(pcfg.steps);
    for step in 1..=pcfg.steps {
        let idx = rand::seq::index::sample(&mut rng, windows.len(), pcfg.batch_size);
        let batch: Vec<&Tensor> = idx.iter().map(|i| &windows[i].x).collect();
        let value = pretrain_step(params, cfg, &batch, pcfg.gamma, &pcfg.augment, &mut adam, &mut rng)?;
        on_step(step, &value);
        history.push(value);
    }
    params.zero_grad();
    Ok(history)
}

/// Accuracy of the pair head on `n_batches` freshly built pair batches of
/// size `batch_size`, dropout disabled.
pub fn pair_accuracy(
    params: &ModelParams,
    cfg: &ModelConfig,
    windows: &[SampleWindow],
    aug: &AugmentConfig,
    batch_size: usize,
    n_batches: usize,
    seed: u64,
) -> Result<f64, SslError> {
    if windows.len() < batch_size {
        return Err(SslError::NotEnoughWindows {
            have: windows.len(),
            need: batch_size,
        });
    }
    let mut rng = SeededRng::seed_from_u64(seed);
    let (mut correct, mut total) = (0usize, 0usize);
    for _ in 0..n_batches {
        let idx = rand::seq::index::sample(&mut rng, windows.len(), batch_size);
        let batch: Vec<&Tensor> = idx.iter().map(|i| &windows[i].x).collect();
        let tape = Tape::new();
        let bound = params.map(|t| tape.constant(t));
        let pb = build_pair_batch(&batch, &bound, cfg, aug, &mut rng, None)?;
        let predicted = argmax_rows(&pb.pair_logits.to_tensor());
        correct += predicted.iter().zip(pb.pair_labels()).filter(|(p, l)| p == l).count();
        total += batch_size;
    }
    Ok(if total > 0 { correct as f64 / total as f64 } else { 0.0 })
}
