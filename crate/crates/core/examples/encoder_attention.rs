// Runs the transformer encoder on a window batch and inspects the
// attention weights of its first layer.

use hartx::autodiff::{Tape, Tensor};
use hartx::nn::{
    encoder_forward, input_projection, multi_head_attention_with_weights, positional_encoding, EncoderConfig,
    EncoderParams, LAYER_NORM_EPS,
};
use hartx::SeededRng;
use rand::{Rng, SeedableRng};

pub fn run_example() -> anyhow::Result<()> {
    let cfg = EncoderConfig {
        seq_len: 16,
        input_dim: 10,
        ..EncoderConfig::default()
    };
    let mut rng = SeededRng::seed_from_u64(3);
    let params = EncoderParams::init(&cfg, &mut rng)?;
    let (b, t, v) = (2, cfg.seq_len, cfg.input_dim);
    let mut x = vec![0.0; b * t * v];
    for row in x.chunks_exact_mut(v) {
        row[rng.gen_range(0..v)] = 1.0;
    }
    let x = Tensor::new(&[b, t, v], x)?;

    let tape = Tape::new();
    let bound = params.bind(&tape);
    let out = encoder_forward(tape.constant(&x), &bound, &cfg, None)?;
    println!("encoder output shape {:?}", out.shape());

    // recompute the first layer's attention input: projection, position
    // encoding, then the pre-attention layer norm
    let pe = positional_encoding(t, cfg.d_model)?;
    let pe = tape.constant_owned(Tensor::stack(&vec![&pe; b])?);
    let h = input_projection(tape.constant(&x), &bound.proj_w, &bound.proj_b)?.add(&pe)?;
    let l0 = &bound.layers[0];
    let normed = h.layer_norm(&l0.ln1_gain, &l0.ln1_bias, LAYER_NORM_EPS)?;
    let (_, weights) = multi_head_attention_with_weights(normed, l0, cfg.n_heads)?;
    let w = weights.to_tensor();
    println!("attention weights shape {:?} (batch, head, query, key)", w.shape());
    let row: Vec<String> = (0..t).map(|k| format!("{:.3}", w.at(&[0, 0, 0, k]))).collect();
    println!("head 0, query 0: [{}]", row.join(", "));
    let sum: f64 = (0..t).map(|k| w.at(&[0, 0, 0, k])).sum();
    println!("row sum {sum:.12}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
