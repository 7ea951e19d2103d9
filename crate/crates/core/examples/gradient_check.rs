// Checks reverse-mode gradients against central finite differences, first
// for a small hand-built graph and then for a whole encoder + classifier.

use hartx::autodiff::{finite_diff_check, Tensor};
use hartx::model::{ModelConfig, ModelParams};
use hartx::nn::EncoderConfig;
use hartx::SeededRng;
use rand::{Rng, SeedableRng};

pub fn run_example() -> anyhow::Result<()> {
    let mut rng = SeededRng::seed_from_u64(0);
    let mut random = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };

    // softmax(gelu(a·b)) against a fixed target
    let a = random(&[3, 4])?;
    let b = random(&[4, 5])?;
    let target = random(&[3, 5])?;
    let report = finite_diff_check(
        |tape, v| v[0].matmul(&v[1])?.gelu().softmax().l2_loss(&tape.constant(&target)),
        &[a, b],
        1e-5,
        1e-4,
    )?;
    for e in &report.entries {
        println!("param {}: max relative error {:.2e}", e.param, e.max_rel_err);
    }
    anyhow::ensure!(report.passed(), "small graph failed the check");

    let cfg = ModelConfig::new(
        EncoderConfig {
            n_layers: 1,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            seq_len: 6,
            input_dim: 4,
            dropout_rate: 0.0,
            use_positional_encoding: true,
        },
        3,
    );
    let params = ModelParams::init(&cfg, &mut SeededRng::seed_from_u64(1))?;
    let x = random(&[2, 6, 4])?;
    let mut flat = Vec::new();
    params.visit(&mut |_, t| flat.push(t.clone()));
    let report = finite_diff_check(
        |tape, vars| {
            let mut it = vars.iter().copied();
            let bound = params.map(|_| it.next().expect("one var per tensor"));
            let enc = bound
                .encode(tape.constant(&x), &cfg, None)
                .expect("shapes match the config");
            bound
                .class_logits(&enc)
                .expect("classifier present")
                .cross_entropy(&[0, 2])
        },
        &flat,
        1e-5,
        1e-3,
    )?;
    println!(
        "encoder + classifier: {} tensors, max relative error {:.2e}",
        report.entries.len(),
        report.max_rel_err()
    );
    anyhow::ensure!(report.passed(), "model failed the check");
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
