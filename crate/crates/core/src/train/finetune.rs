use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::optim::{Adam, AdamConfig};
use super::TrainError;
use crate::autodiff::{Tape, Tensor};
use crate::data::{stack_windows, SampleWindow};
use crate::model::{argmax_rows, ModelConfig, ModelParams, ParamGroup};
use crate::nn::Dropout;
use crate::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub seed: u64,
    /// Also update the encoder, not just the classifier.
    pub train_encoder: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            optimizer: AdamConfig::default(),
            seed: 0,
            train_encoder: true,
        }
    }
}

/// One CSV row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
}

pub const LOG_HEADER: &str = "epoch,split,loss,accuracy,macro_f1";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch, self.split, self.loss, self.accuracy, self.macro_f1
        )
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    /// Parameters from the epoch with the best validation accuracy (the
    /// earliest on ties), or the final ones when there is no validation set.
    pub best: ModelParams,
    pub best_epoch: Option<usize>,
    pub best_val: Option<MetricsReport>,
    pub log: Vec<EpochLog>,
}

fn check_labels(windows: &[SampleWindow], classes: usize) -> Result<(), TrainError> {
    match windows.iter().find(|w| w.label >= classes) {
        Some(w) => Err(TrainError::Label {
            label: w.label,
            classes,
        }),
        None => Ok(()),
    }
}

/// Supervised training of the classifier (and by default the encoder) with
/// cross-entropy. `on_epoch` sees each log row as it is produced.
pub fn finetune(
    params: ModelParams,
    cfg: &ModelConfig,
    train: &[SampleWindow],
    val: &[SampleWindow],
    classes: &[String],
    fcfg: &FinetuneConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FinetuneOutcome, TrainError> {
    if train.is_empty() {
        return Err(TrainError::Empty("training set"));
    }
    if fcfg.batch_size == 0 {
        return Err(TrainError::Config("batch_size must be positive".into()));
    }
    check_labels(train, cfg.n_classes)?;
    check_labels(val, cfg.n_classes)?;
    params.check_shapes(cfg)?;

    let groups: &[ParamGroup] = if fcfg.train_encoder {
        &[ParamGroup::Encoder, ParamGroup::Classifier]
    } else {
        &[ParamGroup::Classifier]
    };
    let mut params = params;
    let mut rng = SeededRng::seed_from_u64(fcfg.seed);
    let mut adam = Adam::new(fcfg.optimizer);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(usize, MetricsReport, ModelParams)> = None;

    for epoch in 1..=fcfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut truth = Vec::with_capacity(train.len());
        let mut predicted = Vec::with_capacity(train.len());
        for chunk in order.chunks(fcfg.batch_size) {
            let batch: Vec<&SampleWindow> = chunk.iter().map(|&i| &train[i]).collect();
            let (x, labels) = stack_windows(&batch);
            let (loss, preds) = train_step(&mut params, cfg, &x, &labels, groups, &mut adam, &mut rng)?;
            loss_sum += loss * labels.len() as f64;
            truth.extend(labels);
            predicted.extend(preds);
        }
        let report = MetricsReport::from_predictions(&truth, &predicted, classes, loss_sum / train.len() as f64);
        let row = EpochLog {
            epoch,
            split: "train".into(),
            loss: report.loss,
            accuracy: report.accuracy,
            macro_f1: report.macro_f1,
        };
        on_epoch(&row);
        log.push(row);

        if !val.is_empty() {
            let report = super::evaluate(&params, cfg, val, classes)?;
            let row = EpochLog {
                epoch,
                split: "val".into(),
                loss: report.loss,
                accuracy: report.accuracy,
                macro_f1: report.macro_f1,
            };
            on_epoch(&row);
            log.push(row);
            if best.as_ref().is_none_or(|b| report.accuracy > b.1.accuracy) {
                best = Some((epoch, report, params.clone()));
            }
        }
    }

    params.zero_grad();
    Ok(match best {
        Some((epoch, report, mut p)) => {
            p.zero_grad();
            FinetuneOutcome {
                best: p,
                best_epoch: Some(epoch),
                best_val: Some(report),
                log,
            }
        }
        None => FinetuneOutcome {
            best_epoch: (fcfg.epochs > 0).then_some(fcfg.epochs),
            best: params,
            best_val: None,
            log,
        },
    })
}

/// One optimizer step on a labelled batch; returns the batch loss and the
/// training-mode predictions.
fn train_step(
    params: &mut ModelParams,
    cfg: &ModelConfig,
    x: &Tensor,
    labels: &[usize],
    groups: &[ParamGroup],
    adam: &mut Adam,
    rng: &mut SeededRng,
) -> Result<(f64, Vec<usize>), TrainError> {
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let mut dropout = Dropout::new(cfg.encoder.dropout_rate, rng);
    let enc = bound.encode(tape.constant(x), cfg, Some(&mut dropout))?;
    let logits = bound.class_logits(&enc)?;
    let loss = logits.cross_entropy(labels)?;
    let grads = tape.backward(loss)?;
    params.zero_grad();
    params.accumulate_grads(&bound, &grads, groups)?;
    adam.step(&mut params.select_mut(groups))?;
    Ok((loss.item(), argmax_rows(&logits.to_tensor())))
}

/// Chronologically ordered subset holding `fraction` of the windows
/// (rounded, at least one), chosen uniformly at random.
pub fn label_subset(
    windows: &[SampleWindow],
    fraction: f64,
    rng: &mut SeededRng,
) -> Result<Vec<SampleWindow>, TrainError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(TrainError::Config(format!("label fraction {fraction} outside (0, 1]")));
    }
    if windows.is_empty() {
        return Ok(Vec::new());
    }
    let k = ((windows.len() as f64 * fraction).round() as usize).clamp(1, windows.len());
    let mut idx = rand::seq::index::sample(rng, windows.len(), k).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| windows[i].clone()).collect())
}
