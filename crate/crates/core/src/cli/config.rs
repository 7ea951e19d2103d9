use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::data::{SynthConfig, VocabOptions, DEFAULT_STRIDE, DEFAULT_WINDOW};
use crate::model::{ModelConfig, Pooling};
use crate::nn::EncoderConfig;
use crate::ssl::PretrainConfig;
use crate::train::FinetuneConfig;

/// Architecture settings. Window length and channel count come from the
/// data section and the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout_rate: f64,
    pub use_positional_encoding: bool,
    pub head_hidden: usize,
    pub pooling: Pooling,
}

impl Default for ModelSection {
    fn default() -> Self {
        let e = EncoderConfig::default();
        Self {
            n_layers: e.n_layers,
            d_model: e.d_model,
            n_heads: e.n_heads,
            d_ff: e.d_ff,
            dropout_rate: e.dropout_rate,
            use_positional_encoding: e.use_positional_encoding,
            head_hidden: 64,
            pooling: Pooling::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    /// Event log to train or evaluate on.
    pub path: Option<PathBuf>,
    pub window: usize,
    pub stride: usize,
    pub motion_only: bool,
    pub include_numeric: bool,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            window: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
            motion_only: false,
            include_numeric: false,
            train_fraction: 0.8,
            val_fraction: 0.1,
        }
    }
}

impl DataSection {
    pub fn vocab_options(&self) -> VocabOptions {
        VocabOptions {
            motion_only: self.motion_only,
            include_numeric: self.include_numeric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneSection {
    #[serde(flatten)]
    pub train: FinetuneConfig,
    /// Fraction of training windows whose labels are used.
    pub label_fraction: f64,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        Self {
            train: FinetuneConfig::default(),
            label_fraction: 1.0,
        }
    }
}

/// Everything a run needs. Written as `config.json` next to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub model: ModelSection,
    pub data: DataSection,
    pub synth: SynthConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs"),
            model: ModelSection::default(),
            data: DataSection::default(),
            synth: SynthConfig::default(),
            pretrain: PretrainConfig::default(),
            finetune: FinetuneSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn model_config(&self, input_dim: usize, n_classes: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            encoder: EncoderConfig {
                n_layers: m.n_layers,
                d_model: m.d_model,
                n_heads: m.n_heads,
                d_ff: m.d_ff,
                seq_len: self.data.window,
                input_dim,
                dropout_rate: m.dropout_rate,
                use_positional_encoding: m.use_positional_encoding,
            },
            n_classes,
            head_hidden: m.head_hidden,
            pooling: m.pooling,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let d = &self.data;
        if d.window == 0 || d.stride == 0 || d.stride > d.window {
            return bad(format!(
                "need 1 <= stride <= window, got window {} stride {}",
                d.window, d.stride
            ));
        }
        if !(d.train_fraction > 0.0 && d.val_fraction >= 0.0 && d.train_fraction + d.val_fraction <= 1.0) {
            return bad("train_fraction and val_fraction must be nonnegative and sum to at most 1".into());
        }
        if !(0.0..=1.0).contains(&self.pretrain.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.pretrain.gamma));
        }
        self.pretrain.augment.validate().map_err(CliError::Config)?;
        let f = self.finetune.label_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return bad(format!("label_fraction {f} outside (0, 1]"));
        }
        self.model_config(1, 1)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self).expect("config serializes");
        super::write_file(&dir.join("config.json"), json.as_bytes())
    }
}
