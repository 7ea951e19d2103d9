// Trains a small classifier, saves it, reloads it, and confirms the
// reloaded model evaluates identically. Also shows the errors raised for
// a corrupted file and a mismatched config.

use hartx::data::{
    chronological_split, label_events, parse_events, synth_generate, window_events, SensorVocab, SynthConfig,
    VocabOptions,
};
use hartx::model::{ModelConfig, ModelParams};
use hartx::nn::EncoderConfig;
use hartx::train::{
    evaluate, finetune, load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint, FinetuneConfig, WindowSpec,
};
use hartx::SeededRng;
use rand::SeedableRng;

pub fn run_example() -> anyhow::Result<()> {
    let out = synth_generate(&SynthConfig::separable(400, 16, 8), 4)?;
    let events = label_events(&parse_events(&out.text)?).events;
    let vocab = SensorVocab::build(&events, VocabOptions::default());
    let split = chronological_split(window_events(&events, &vocab, 16, 8)?, 0.8, 0.1);
    let cfg = ModelConfig::new(
        EncoderConfig {
            n_layers: 1,
            d_model: 16,
            n_heads: 2,
            d_ff: 32,
            seq_len: 16,
            input_dim: vocab.n_channels(),
            dropout_rate: 0.1,
            use_positional_encoding: true,
        },
        vocab.n_classes(),
    );
    let params = ModelParams::init(&cfg, &mut SeededRng::seed_from_u64(0))?;
    let fcfg = FinetuneConfig {
        epochs: 3,
        ..FinetuneConfig::default()
    };
    let trained = finetune(params, &cfg, &split.train, &split.val, &vocab.labels, &fcfg, |_| {})?.best;
    let report = evaluate(&trained, &cfg, &split.test, &vocab.labels)?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.hartx");
    save_checkpoint(
        &path,
        &Checkpoint {
            params: trained,
            config: cfg.clone(),
            vocab: Some(vocab.clone()),
            classes: vocab.labels.clone(),
            window: Some(WindowSpec { length: 16, stride: 8 }),
        },
    )?;
    println!("saved {} bytes", std::fs::metadata(&path)?.len());

    let loaded = load_checkpoint(&path)?;
    let again = evaluate(&loaded.params, &loaded.config, &split.test, &loaded.classes)?;
    anyhow::ensure!(again == report, "reloaded model must evaluate identically");
    println!("test accuracy {:.3} before and after reload", again.accuracy);

    let mut bytes = std::fs::read(&path)?;
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&path, &bytes)?;
    println!("after flipping one bit: {}", load_checkpoint(&path).unwrap_err());

    bytes[last] ^= 1;
    std::fs::write(&path, &bytes)?;
    let mut narrower = cfg.clone();
    narrower.encoder.d_model = 8;
    println!("with d_model 8: {}", load_checkpoint_for(&path, &narrower).unwrap_err());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
