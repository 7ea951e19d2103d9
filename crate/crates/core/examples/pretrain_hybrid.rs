// Self-supervised pretraining with the hybrid objective
// `L = γ·L_a + L_c`, followed by a held-out pair-classification check.

use hartx::data::{
    chronological_split, label_events, parse_events, synth_generate, window_events, SensorVocab, SynthConfig,
    VocabOptions,
};
use hartx::model::{ModelConfig, ModelParams};
use hartx::nn::EncoderConfig;
use hartx::ssl::{pair_accuracy, pretrain, PretrainConfig};
use hartx::SeededRng;
use rand::SeedableRng;

pub fn run_example() -> anyhow::Result<()> {
    let out = synth_generate(
        &SynthConfig {
            n_events: 6000,
            ..SynthConfig::default()
        },
        1,
    )?;
    let events = label_events(&parse_events(&out.text)?).events;
    let vocab = SensorVocab::build(&events, VocabOptions::default());
    let split = chronological_split(window_events(&events, &vocab, 16, 8)?, 0.8, 0.1);

    let cfg = ModelConfig::new(
        EncoderConfig {
            n_layers: 1,
            d_model: 32,
            n_heads: 4,
            d_ff: 64,
            seq_len: 16,
            input_dim: vocab.n_channels(),
            dropout_rate: 0.1,
            use_positional_encoding: true,
        },
        vocab.n_classes(),
    );
    let mut params = ModelParams::init(&cfg, &mut SeededRng::seed_from_u64(0))?;
    let pcfg = PretrainConfig {
        steps: 300,
        batch_size: 16,
        gamma: 0.5,
        seed: 0,
        ..PretrainConfig::default()
    };
    let before = pair_accuracy(&params, &cfg, &split.test, &pcfg.augment, 16, 10, 99)?;
    let history = pretrain(&mut params, &cfg, &split.train, &pcfg, |step, v| {
        if step % 100 == 0 {
            println!(
                "step {step:4}: L {:.4} = {} * L_a {:.4} + L_c {:.4}",
                v.total, v.gamma, v.recon, v.pair
            );
        }
    })?;
    let after = pair_accuracy(&params, &cfg, &split.test, &pcfg.augment, 16, 10, 99)?;
    let mean = |s: &[hartx::ssl::HybridLossValue]| s.iter().map(|v| v.total).sum::<f64>() / s.len() as f64;
    println!(
        "mean loss: first 10 steps {:.3}, last 10 steps {:.3}",
        mean(&history[..10]),
        mean(&history[history.len() - 10..])
    );
    println!("held-out pair accuracy: {before:.3} before, {after:.3} after");
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
