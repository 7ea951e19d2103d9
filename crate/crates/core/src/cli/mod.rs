//! Command implementations behind the `hartx` binary.

mod config;

pub use config::{DataSection, FinetuneSection, ModelSection, RunConfig};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use thiserror::Error;

use crate::data::{
    chronological_split, label_events, read_events, synth_generate, window_events, DataError, SampleWindow,
    SensorVocab, Split,
};
use crate::model::{transfer_encoder, ModelParams};
use crate::ssl::{pretrain, SslError};
use crate::train::{
    evaluate, finetune, label_subset, load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, MetricsReport,
    TrainError, WindowSpec, LOG_HEADER,
};
use crate::SeededRng;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Checkpoint(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::SynthConfig(_) | DataError::Window { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Checkpoint(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Data(d) => d.into(),
            TrainError::Checkpoint(c) => c.into(),
            TrainError::Empty(_) | TrainError::Label { .. } => CliError::Data(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<SslError> for CliError {
    fn from(e: SslError) -> Self {
        match e {
            SslError::NotEnoughWindows { .. } => CliError::Data(e.to_string()),
            SslError::Train(t) => t.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "hartx",
    version,
    about = "Transformer activity recognition on ambient sensor logs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic event log and its manifest.
    Gen(GenArgs),
    /// Self-supervised pretraining on an event log.
    Pretrain(PretrainArgs),
    /// Supervised fine-tuning, optionally from a pretrained checkpoint.
    Finetune(FinetuneArgs),
    /// Evaluate a checkpoint and print the report as JSON.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for generation, initialization, sampling and dropout.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Event log.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Keep only motion sensors in the ON state.
    #[arg(long)]
    pub motion_only: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub n_events: Option<usize>,
    #[arg(long)]
    pub n_activities: Option<usize>,
    #[arg(long)]
    pub n_sensors: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Initialize the encoder from this pretrained checkpoint.
    #[arg(long)]
    pub from_pretrained: Option<PathBuf>,
    /// Fraction of training windows whose labels are used.
    #[arg(long)]
    pub label_fraction: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    All,
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Run configuration supplying the split fractions.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitChoice,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => {
            let summary = cmd_gen(&resolve_gen(&a)?)?;
            println!("{summary}");
        }
        Command::Pretrain(a) => cmd_pretrain(&resolve_pretrain(&a)?)?,
        Command::Finetune(a) => {
            let cfg = resolve_finetune(&a)?;
            cmd_finetune(&cfg, a.from_pretrained.as_deref())?;
        }
        Command::Eval(a) => {
            let cfg = match &a.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            let report = cmd_eval(&a.checkpoint, &a.data, a.split, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
    }
    Ok(())
}

fn base_config(c: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
        cfg.pretrain.seed = s;
        cfg.finetune.train.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn apply_data(cfg: &mut RunConfig, d: &DataArgs) {
    if let Some(p) = &d.data {
        cfg.data.path = Some(p.clone());
    }
    if let Some(w) = d.window {
        cfg.data.window = w;
    }
    if let Some(s) = d.stride {
        cfg.data.stride = s;
    }
    if d.motion_only {
        cfg.data.motion_only = true;
    }
}

pub fn resolve_gen(a: &GenArgs) -> Result<RunConfig, CliError> {
    let mut cfg = base_config(&a.common)?;
    let s = &mut cfg.synth;
    s.n_events = a.n_events.unwrap_or(s.n_events);
    s.n_activities = a.n_activities.unwrap_or(s.n_activities);
    s.n_sensors = a.n_sensors.unwrap_or(s.n_sensors);
    s.noise = a.noise.unwrap_or(s.noise);
    Ok(cfg)
}

pub fn resolve_pretrain(a: &PretrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg = base_config(&a.common)?;
    apply_data(&mut cfg, &a.data);
    let p = &mut cfg.pretrain;
    p.steps = a.steps.unwrap_or(p.steps);
    p.gamma = a.gamma.unwrap_or(p.gamma);
    p.batch_size = a.batch_size.unwrap_or(p.batch_size);
    p.optimizer.lr = a.lr.unwrap_or(p.optimizer.lr);
    cfg.validate()?;
    Ok(cfg)
}

pub fn resolve_finetune(a: &FinetuneArgs) -> Result<RunConfig, CliError> {
    let mut cfg = base_config(&a.common)?;
    apply_data(&mut cfg, &a.data);
    let f = &mut cfg.finetune;
    f.label_fraction = a.label_fraction.unwrap_or(f.label_fraction);
    f.train.epochs = a.epochs.unwrap_or(f.train.epochs);
    f.train.batch_size = a.batch_size.unwrap_or(f.train.batch_size);
    f.train.optimizer.lr = a.lr.unwrap_or(f.train.optimizer.lr);
    cfg.validate()?;
    Ok(cfg)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

/// Writes `events.txt`, `manifest.json` and `config.json` into the output
/// directory and returns a one-line summary.
pub fn cmd_gen(cfg: &RunConfig) -> Result<String, CliError> {
    let out = synth_generate(&cfg.synth, cfg.seed)?;
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("events.txt"), out.text.as_bytes())?;
    let manifest = serde_json::to_string_pretty(&out.manifest).expect("manifest serializes");
    write_file(&cfg.out_dir.join("manifest.json"), manifest.as_bytes())?;
    cfg.write(&cfg.out_dir)?;
    Ok(format!(
        "wrote {} events, {} classes, {} sensors to {}",
        out.labels.len(),
        out.manifest.classes.len(),
        cfg.synth.n_sensors,
        cfg.out_dir.join("events.txt").display()
    ))
}

struct Dataset {
    vocab: SensorVocab,
    split: Split,
}

fn data_path(cfg: &RunConfig) -> Result<&Path, CliError> {
    cfg.data
        .path
        .as_deref()
        .ok_or_else(|| CliError::Config("no event log given (--data or data.path)".into()))
}

/// Reads, labels and windows a log. The vocabulary is built from the log
/// unless one is supplied.
fn load_dataset(path: &Path, cfg: &RunConfig, vocab: Option<SensorVocab>) -> Result<Dataset, CliError> {
    let labelled = label_events(&read_events(path)?);
    let vocab = vocab.unwrap_or_else(|| SensorVocab::build(&labelled.events, cfg.data.vocab_options()));
    let windows = window_events(&labelled.events, &vocab, cfg.data.window, cfg.data.stride)?;
    if windows.is_empty() {
        return Err(CliError::Data(format!(
            "{} yields no windows of length {}",
            path.display(),
            cfg.data.window
        )));
    }
    let split = chronological_split(windows, cfg.data.train_fraction, cfg.data.val_fraction);
    Ok(Dataset { vocab, split })
}

/// Writes `pretrained.hartx`, `pretrain_loss.csv` and `config.json`.
pub fn cmd_pretrain(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let ds = load_dataset(data_path(cfg)?, cfg, None)?;
    let model_cfg = cfg.model_config(ds.vocab.n_channels(), ds.vocab.n_classes());
    let mut rng = SeededRng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(&model_cfg, &mut rng).map_err(|e| CliError::Config(e.to_string()))?;
    create_dir(&cfg.out_dir)?;
    cfg.write(&cfg.out_dir)?;

    let mut csv = String::from("step,L,L_a,L_c,gamma\n");
    pretrain(&mut params, &model_cfg, &ds.split.train, &cfg.pretrain, |step, v| {
        let _ = writeln!(csv, "{step},{},{},{},{}", v.total, v.recon, v.pair, v.gamma);
        if step % 100 == 0 {
            log::info!("step {step}: L={:.4} L_a={:.4} L_c={:.4}", v.total, v.recon, v.pair);
        }
    })?;
    write_file(&cfg.out_dir.join("pretrain_loss.csv"), csv.as_bytes())?;
    let ckpt = Checkpoint {
        params,
        config: model_cfg,
        classes: ds.vocab.labels.clone(),
        vocab: Some(ds.vocab),
        window: Some(WindowSpec {
            length: cfg.data.window,
            stride: cfg.data.stride,
        }),
    };
    save_checkpoint(&cfg.out_dir.join("pretrained.hartx"), &ckpt)?;
    Ok(())
}

/// What a fine-tuning run used and produced.
#[derive(Debug, Clone)]
pub struct FinetuneRun {
    /// Labelled windows actually trained on.
    pub train_windows: usize,
    /// Windows in the training split before label subsampling.
    pub available_train_windows: usize,
    pub best_epoch: Option<usize>,
    pub best_val_accuracy: Option<f64>,
    pub test: MetricsReport,
}

/// Writes `best.hartx`, `metrics.csv`, `test_report.json` and `config.json`.
pub fn cmd_finetune(cfg: &RunConfig, from_pretrained: Option<&Path>) -> Result<FinetuneRun, CliError> {
    cfg.validate()?;
    let pretrained = from_pretrained.map(load_checkpoint).transpose()?;
    let vocab = match &pretrained {
        Some(p) => Some(
            p.vocab
                .clone()
                .ok_or_else(|| CliError::Checkpoint("pretrained checkpoint carries no sensor vocabulary".into()))?,
        ),
        None => None,
    };
    let ds = load_dataset(data_path(cfg)?, cfg, vocab)?;
    let model_cfg = cfg.model_config(ds.vocab.n_channels(), ds.vocab.n_classes());
    let mut rng = SeededRng::seed_from_u64(cfg.seed);
    let params = match &pretrained {
        Some(p) => {
            if !p.config.encoder_compatible(&model_cfg) {
                return Err(CliError::Checkpoint(format!(
                    "pretrained encoder {:?} is incompatible with the requested {:?}",
                    p.config.encoder, model_cfg.encoder
                )));
            }
            transfer_encoder(&p.params, &p.config, &model_cfg, &mut rng)
        }
        None => ModelParams::init(&model_cfg, &mut rng).map(|mut p| {
            p.decoder = None;
            p.pair = None;
            p
        }),
    }
    .map_err(|e| CliError::Config(e.to_string()))?;

    let train = label_subset(&ds.split.train, cfg.finetune.label_fraction, &mut rng)?;
    log::info!(
        "fine-tuning on {} of {} training windows, {} validation windows",
        train.len(),
        ds.split.train.len(),
        ds.split.val.len()
    );
    create_dir(&cfg.out_dir)?;
    cfg.write(&cfg.out_dir)?;
    let mut csv = format!("{LOG_HEADER}\n");
    let outcome = finetune(
        params,
        &model_cfg,
        &train,
        &ds.split.val,
        &ds.vocab.labels,
        &cfg.finetune.train,
        |row| {
            log::info!(
                "epoch {} {}: loss {:.4} accuracy {:.4}",
                row.epoch,
                row.split,
                row.loss,
                row.accuracy
            );
            let _ = writeln!(csv, "{}", row.csv_row());
        },
    )?;
    write_file(&cfg.out_dir.join("metrics.csv"), csv.as_bytes())?;

    let test_set: &[SampleWindow] = if ds.split.test.is_empty() {
        &ds.split.val
    } else {
        &ds.split.test
    };
    let report = if test_set.is_empty() {
        None
    } else {
        Some(evaluate(&outcome.best, &model_cfg, test_set, &ds.vocab.labels)?)
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&cfg.out_dir.join("test_report.json"), json.as_bytes())?;
    let ckpt = Checkpoint {
        params: outcome.best,
        config: model_cfg,
        classes: ds.vocab.labels.clone(),
        vocab: Some(ds.vocab),
        window: Some(WindowSpec {
            length: cfg.data.window,
            stride: cfg.data.stride,
        }),
    };
    save_checkpoint(&cfg.out_dir.join("best.hartx"), &ckpt)?;
    Ok(FinetuneRun {
        train_windows: train.len(),
        available_train_windows: ds.split.train.len(),
        best_epoch: outcome.best_epoch,
        best_val_accuracy: outcome.best_val.map(|r| r.accuracy),
        test: report.ok_or_else(|| CliError::Data("no validation or test windows to report on".into()))?,
    })
}

/// Evaluates a checkpoint on one split of an event log, using the
/// checkpoint's vocabulary and window length.
pub fn cmd_eval(
    checkpoint: &Path,
    data: &Path,
    split: SplitChoice,
    cfg: &RunConfig,
) -> Result<MetricsReport, CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let vocab = ckpt
        .vocab
        .clone()
        .ok_or_else(|| CliError::Checkpoint("checkpoint carries no sensor vocabulary".into()))?;
    let mut cfg = cfg.clone();
    if let Some(w) = ckpt.window {
        cfg.data.window = w.length;
        cfg.data.stride = w.stride;
    }
    let labelled = label_events(&read_events(data)?);
    let known = vocab.sensors();
    let mut unknown: Vec<String> = labelled
        .events
        .iter()
        .map(|e| e.event.sensor_id.as_str())
        .filter(|s| !known.contains(s))
        .map(String::from)
        .collect();
    unknown.sort();
    unknown.dedup();
    if !unknown.is_empty() {
        return Err(CliError::Data(format!(
            "vocabulary mismatch, sensors unknown to the checkpoint: {}",
            unknown.join(", ")
        )));
    }
    let ds = load_dataset(data, &cfg, Some(vocab))?;
    let windows: Vec<SampleWindow> = match split {
        SplitChoice::All => ds
            .split
            .train
            .into_iter()
            .chain(ds.split.val)
            .chain(ds.split.test)
            .collect(),
        SplitChoice::Train => ds.split.train,
        SplitChoice::Val => ds.split.val,
        SplitChoice::Test => ds.split.test,
    };
    Ok(evaluate(&ckpt.params, &ckpt.config, &windows, &ckpt.classes)?)
}
