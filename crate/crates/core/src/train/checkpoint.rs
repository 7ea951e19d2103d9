//! Single-file checkpoints.
//!
//! Layout: the 5 bytes `HARTX`, a little-endian `u32` format version, a
//! little-endian `u64` metadata length, the UTF-8 JSON metadata, then every
//! parameter as little-endian `f64` in [`ModelParams::visit`] order. The
//! metadata checksum is the SHA-256 of the metadata serialized with an
//! empty checksum field followed by the parameter bytes.

use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::SensorVocab;
use crate::model::{ModelConfig, ModelParams};
use crate::SeededRng;

pub const MAGIC: &[u8; 5] = b"HARTX";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckpointError {
    #[error("cannot access checkpoint {0}: {1}")]
    Io(String, String),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint checksum mismatch (file corrupt or modified)")]
    Checksum,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint parameters do not match its config: {0}")]
    ShapeMismatch(String),
    #[error("checkpoint config does not match: {0}")]
    ConfigMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub vocab: Option<SensorVocab>,
    pub classes: Vec<String>,
    pub window: Option<WindowSpec>,
    pub has_decoder: bool,
    pub has_pair: bool,
    pub params: Vec<ParamEntry>,
    pub checksum: String,
}

/// Windowing used to build the model's inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub config: ModelConfig,
    pub vocab: Option<SensorVocab>,
    pub classes: Vec<String>,
    pub window: Option<WindowSpec>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut params = Vec::new();
        let mut payload = Vec::new();
        self.params.visit(&mut |name, t| {
            params.push(ParamEntry {
                name,
                shape: t.shape().to_vec(),
            });
            payload.extend(t.to_le_bytes());
        });
        let mut meta = CheckpointMeta {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            classes: self.classes.clone(),
            window: self.window,
            has_decoder: self.params.decoder.is_some(),
            has_pair: self.params.pair.is_some(),
            params,
            checksum: String::new(),
        };
        meta.checksum = checksum(&meta, &payload);
        let meta = serde_json::to_vec(&meta).expect("metadata serializes");

        let mut out = Vec::with_capacity(17 + meta.len() + payload.len());
        out.extend(MAGIC);
        out.extend(FORMAT_VERSION.to_le_bytes());
        out.extend((meta.len() as u64).to_le_bytes());
        out.extend(meta);
        out.extend(payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 5 || &bytes[..5] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let header = bytes
            .get(5..17)
            .ok_or_else(|| CheckpointError::Malformed("truncated header".into()))?;
        let version = u32::from_le_bytes(header[..4].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let meta_len = u64::from_le_bytes(header[4..].try_into().expect("8 bytes")) as usize;
        let meta_bytes = bytes
            .get(17..17usize.saturating_add(meta_len))
            .ok_or_else(|| CheckpointError::Malformed("truncated metadata".into()))?;
        let payload = &bytes[17 + meta_len..];
        let mut meta: CheckpointMeta = serde_json::from_slice(meta_bytes).map_err(|_| CheckpointError::Checksum)?;
        let stored = std::mem::take(&mut meta.checksum);
        if checksum(&meta, payload) != stored {
            return Err(CheckpointError::Checksum);
        }

        let cfg = meta.config.clone();
        let expected = ModelParams::expected_shapes(&cfg, meta.has_decoder, meta.has_pair);
        let listed: Vec<(String, Vec<usize>)> = meta.params.iter().map(|p| (p.name.clone(), p.shape.clone())).collect();
        if listed != expected {
            let diff = listed
                .iter()
                .zip(&expected)
                .find(|(a, b)| a != b)
                .map(|(a, b)| format!("{} {:?} vs expected {} {:?}", a.0, a.1, b.0, b.1))
                .unwrap_or_else(|| format!("{} tensors vs expected {}", listed.len(), expected.len()));
            return Err(CheckpointError::ShapeMismatch(diff));
        }
        let total: usize = expected.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        if payload.len() != total * 8 {
            return Err(CheckpointError::Malformed(format!(
                "payload holds {} bytes, expected {}",
                payload.len(),
                total * 8
            )));
        }

        // shapes come from the config; values are overwritten below
        let mut params = ModelParams::init(&cfg, &mut SeededRng::seed_from_u64(0))
            .map_err(|e| CheckpointError::ShapeMismatch(e.to_string()))?;
        if !meta.has_decoder {
            params.decoder = None;
        }
        if !meta.has_pair {
            params.pair = None;
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        params.visit_mut(&mut |_, t| {
            for x in t.data_mut() {
                *x = values.next().expect("length checked");
            }
        });
        let vocab = meta.vocab.map(|mut v| {
            v.reindex();
            v
        });
        Ok(Self {
            params,
            config: cfg,
            vocab,
            classes: meta.classes,
            window: meta.window,
        })
    }
}

fn checksum(meta: &CheckpointMeta, payload: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(meta).expect("metadata serializes"));
    h.update(payload);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| CheckpointError::Io(path.display().to_string(), e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io(path.display().to_string(), e.to_string()))?;
    Checkpoint::from_bytes(&bytes)
}

/// Loads a checkpoint and requires its encoder to match `expected`.
pub fn load_checkpoint_for(path: &Path, expected: &ModelConfig) -> Result<Checkpoint, CheckpointError> {
    let ckpt = load_checkpoint(path)?;
    if !ckpt.config.encoder_compatible(expected) {
        return Err(CheckpointError::ConfigMismatch(format!(
            "checkpoint encoder {:?}, requested {:?}",
            ckpt.config.encoder, expected.encoder
        )));
    }
    Ok(ckpt)
}
