// Generates a synthetic apartment log, then parses, labels and windows it
// the same way a real CASAS-style log would be.

use hartx::data::{
    chronological_split, label_events, parse_events, synth_generate, window_events, SensorVocab, SynthConfig,
    VocabOptions,
};

pub fn run_example() -> anyhow::Result<()> {
    let cfg = SynthConfig {
        n_events: 5000,
        ..SynthConfig::default()
    };
    let out = synth_generate(&cfg, 7)?;
    println!("first lines of the log:");
    for line in out.text.lines().take(4) {
        println!("  {line}");
    }

    let labelled = label_events(&parse_events(&out.text)?);
    anyhow::ensure!(labelled.warnings.is_empty(), "generator markers are balanced");
    for (motion_only, name) in [(false, "all channels"), (true, "motion ON only")] {
        let vocab = SensorVocab::build(
            &labelled.events,
            VocabOptions {
                motion_only,
                include_numeric: false,
            },
        );
        println!("{name}: {} channels, classes {:?}", vocab.n_channels(), vocab.labels);
    }

    let vocab = SensorVocab::build(&labelled.events, VocabOptions::default());
    let windows = window_events(&labelled.events, &vocab, 32, 16)?;
    let mut counts = vec![0usize; vocab.n_classes()];
    for w in &windows {
        counts[w.label] += 1;
    }
    println!("{} windows of 32 events; per class {:?}", windows.len(), counts);
    let split = chronological_split(windows, 0.8, 0.1);
    println!(
        "chronological split: {} train / {} val / {} test",
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
