// Compares fine-tuning from a pretrained encoder with fine-tuning from
// scratch when only 10% of the training windows keep their labels.

use hartx::data::{
    chronological_split, label_events, parse_events, synth_generate, window_events, SensorVocab, SynthConfig,
    VocabOptions,
};
use hartx::model::{transfer_encoder, ModelConfig, ModelParams};
use hartx::nn::EncoderConfig;
use hartx::ssl::{pretrain, PretrainConfig};
use hartx::train::{evaluate, finetune, label_subset, FinetuneConfig};
use hartx::SeededRng;
use rand::SeedableRng;

pub fn run_example() -> anyhow::Result<()> {
    let out = synth_generate(
        &SynthConfig {
            n_events: 8000,
            ..SynthConfig::default()
        },
        2,
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

    let mut rng = SeededRng::seed_from_u64(5);
    let mut pretrained = ModelParams::init(&cfg, &mut rng)?;
    let pcfg = PretrainConfig {
        steps: 300,
        ..PretrainConfig::default()
    };
    pretrain(&mut pretrained, &cfg, &split.train, &pcfg, |_, _| {})?;

    let labelled = label_subset(&split.train, 0.1, &mut rng)?;
    println!("{} of {} training windows labelled", labelled.len(), split.train.len());
    let fcfg = FinetuneConfig {
        epochs: 10,
        batch_size: 8,
        ..FinetuneConfig::default()
    };

    let starts = [
        ("pretrained", transfer_encoder(&pretrained, &cfg, &cfg, &mut rng)?),
        ("scratch", ModelParams::init(&cfg, &mut rng)?),
    ];
    for (name, params) in starts {
        let outcome = finetune(params, &cfg, &labelled, &split.val, &vocab.labels, &fcfg, |_| {})?;
        let curve: Vec<String> = outcome
            .log
            .iter()
            .filter(|r| r.split == "val")
            .map(|r| format!("{:.2}", r.accuracy))
            .collect();
        let test = evaluate(&outcome.best, &cfg, &split.test, &vocab.labels)?;
        println!(
            "{name:>10}: val accuracy by epoch [{}], test accuracy {:.3}, macro-F1 {:.3}",
            curve.join(" "),
            test.accuracy,
            test.macro_f1
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
