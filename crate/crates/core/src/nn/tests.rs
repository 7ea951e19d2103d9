use rand::{Rng, SeedableRng};

use super::*;
use crate::autodiff::{finite_diff_check, Tape, Tensor, Var};
use crate::SeededRng;
use params::ones;

fn rand_tensor(shape: &[usize], rng: &mut SeededRng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn small_cfg(pe: bool) -> EncoderConfig {
    EncoderConfig {
        n_layers: 2,
        d_model: 8,
        n_heads: 2,
        d_ff: 12,
        seq_len: 5,
        input_dim: 6,
        dropout_rate: 0.0,
        use_positional_encoding: pe,
    }
}

fn one_hot_batch(b: usize, cfg: &EncoderConfig, rng: &mut SeededRng) -> Tensor {
    let (t, v) = (cfg.seq_len, cfg.input_dim);
    let mut data = vec![0.0; b * t * v];
    for row in data.chunks_exact_mut(v) {
        row[rng.gen_range(0..v)] = 1.0;
    }
    Tensor::new(&[b, t, v], data).unwrap()
}

fn zero_layer(d: usize, d_ff: usize) -> LayerParams {
    let z = |r: usize, c: usize| Tensor::zeros(&[r, c]).unwrap();
    LayerParams {
        wq: z(d, d),
        wk: z(d, d),
        wv: z(d, d),
        wo: z(d, d),
        w1: z(d, d_ff),
        w2: z(d_ff, d),
        ln1_gain: ones(d),
        ln1_bias: zeros(d),
        ln2_gain: ones(d),
        ln2_bias: zeros(d),
    }
}

#[test]
fn input_projection_selects_rows() {
    let mut rng = SeededRng::seed_from_u64(1);
    let w = rand_tensor(&[4, 3], &mut rng);
    let b = rand_tensor(&[3], &mut rng);
    // rows: e_2, zero, e_0 + e_3
    let x = Tensor::new(&[1, 3, 4], vec![0., 0., 1., 0., 0., 0., 0., 0., 1., 0., 0., 1.]).unwrap();
    let tape = Tape::new();
    let out = input_projection(tape.constant(&x), &tape.constant(&w), &tape.constant(&b))
        .unwrap()
        .to_tensor();
    assert_eq!(out.shape(), &[1, 3, 3]);
    for j in 0..3 {
        assert!((out.at(&[0, 0, j]) - (w.at(&[2, j]) + b.at(&[j]))).abs() < 1e-15);
        assert_eq!(out.at(&[0, 1, j]), b.at(&[j]));
        let oracle = w.at(&[0, j]) + w.at(&[3, j]) + b.at(&[j]);
        assert!((out.at(&[0, 2, j]) - oracle).abs() < 1e-15);
    }

    let bad = Tensor::zeros(&[1, 3, 5]).unwrap();
    assert!(input_projection(tape.constant(&bad), &tape.constant(&w), &tape.constant(&b)).is_err());
}

#[test]
fn positional_encoding_values() {
    let pe = positional_encoding(6, 4).unwrap();
    assert_eq!(pe.row(0), &[0., 1., 0., 1.]);
    assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    assert!((pe.at(&[1, 0]) - 1f64.sin()).abs() < 1e-15);
    assert!((pe.at(&[1, 0]) - 0.8414710).abs() < 1e-7);
    // pair index 1 uses frequency 1/10000^(2/4)
    assert!((pe.at(&[3, 3]) - (3.0f64 / 100.0).cos()).abs() < 1e-15);
}

#[test]
fn attention_examples() {
    let mut rng = SeededRng::seed_from_u64(2);
    let tape = Tape::new();
    let q = tape.constant(&rand_tensor(&[2, 1, 1, 3], &mut rng));
    let k = tape.constant(&rand_tensor(&[2, 1, 1, 3], &mut rng));
    let v = tape.constant(&rand_tensor(&[2, 1, 1, 3], &mut rng));
    let out = scaled_dot_attention(&q, &k, &v).unwrap();
    assert_eq!(out.value().data(), v.value().data());

    // Q = 0: uniform weights, each output row is the mean of V's rows.
    let q0 = tape.constant(&Tensor::zeros(&[1, 1, 4, 2]).unwrap());
    let k = tape.constant(&rand_tensor(&[1, 1, 4, 2], &mut rng));
    let vt = rand_tensor(&[1, 1, 4, 2], &mut rng);
    let out = scaled_dot_attention(&q0, &k, &tape.constant(&vt)).unwrap().to_tensor();
    for c in 0..2 {
        let mean: f64 = (0..4).map(|r| vt.at(&[0, 0, r, c])).sum::<f64>() / 4.0;
        for r in 0..4 {
            assert!((out.at(&[0, 0, r, c]) - mean).abs() < 1e-15);
        }
    }

    let q = tape.constant(&Tensor::new(&[1, 1, 2, 1], vec![1., 0.]).unwrap());
    let v = tape.constant(&Tensor::new(&[1, 1, 2, 1], vec![2., 4.]).unwrap());
    let w = attention_weights(&q, &q).unwrap().to_tensor();
    let e = 1f64.exp();
    assert!((w.at(&[0, 0, 0, 0]) - e / (e + 1.0)).abs() < 1e-15);
    assert!((w.at(&[0, 0, 0, 1]) - 1.0 / (e + 1.0)).abs() < 1e-15);
    let out = scaled_dot_attention(&q, &q, &v).unwrap().to_tensor();
    let oracle = (2.0 * e + 4.0) / (e + 1.0);
    assert!((oracle - 2.537883).abs() < 1e-6);
    assert!((out.at(&[0, 0, 0, 0]) - oracle).abs() < 1e-14);
}

#[test]
fn mha_identity_and_zero_output() {
    let mut rng = SeededRng::seed_from_u64(3);
    let d = 4;
    let eye = Tensor::eye(d).unwrap();
    let mut p = zero_layer(d, 3);
    p.wq = eye.clone();
    p.wk = eye.clone();
    p.wv = eye.clone();
    p.wo = eye;
    let tape = Tape::new();
    let x = rand_tensor(&[3, 1, d], &mut rng);
    let out = multi_head_attention(tape.constant(&x), &p.map(|t| tape.constant(t)), 1).unwrap();
    for (a, b) in out.value().data().iter().zip(x.data()) {
        assert!((a - b).abs() < 1e-15);
    }

    p.wo = Tensor::zeros(&[d, d]).unwrap();
    let x = rand_tensor(&[2, 5, d], &mut rng);
    let out = multi_head_attention(tape.constant(&x), &p.map(|t| tape.constant(t)), 2).unwrap();
    assert!(out.value().data().iter().all(|&v| v == 0.0));
}

/// Head-by-head reference using plain loops.
#[test]
#[allow(clippy::needless_range_loop)]
fn mha_matches_per_head_reference() {
    let mut rng = SeededRng::seed_from_u64(4);
    let (t, d, h) = (2, 4, 2);
    let dk = d / h;
    let x = rand_tensor(&[1, t, d], &mut rng);
    let cfg = EncoderConfig {
        d_model: d,
        d_ff: 3,
        ..small_cfg(false)
    };
    let p = LayerParams::init(&cfg, &mut rng);
    let tape = Tape::new();
    let out = multi_head_attention(tape.constant(&x), &p.map(|t| tape.constant(t)), h)
        .unwrap()
        .to_tensor();

    let proj = |w: &Tensor, i: usize, j: usize| (0..d).map(|c| x.at(&[0, i, c]) * w.at(&[c, j])).sum::<f64>();
    let mut concat = vec![vec![0.0; d]; t];
    for head in 0..h {
        for i in 0..t {
            let scores: Vec<f64> = (0..t)
                .map(|j| {
                    (0..dk)
                        .map(|c| proj(&p.wq, i, head * dk + c) * proj(&p.wk, j, head * dk + c))
                        .sum::<f64>()
                        / (dk as f64).sqrt()
                })
                .collect();
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            for c in 0..dk {
                concat[i][head * dk + c] = (0..t)
                    .map(|j| scores[j].exp() / z * proj(&p.wv, j, head * dk + c))
                    .sum();
            }
        }
    }
    for i in 0..t {
        for j in 0..d {
            let oracle: f64 = (0..d).map(|c| concat[i][c] * p.wo.at(&[c, j])).sum();
            assert!((out.at(&[0, i, j]) - oracle).abs() < 1e-12);
        }
    }
}

#[test]
fn encoder_layer_with_zero_weights_is_identity() {
    let mut rng = SeededRng::seed_from_u64(5);
    let cfg = small_cfg(false);
    let p = zero_layer(cfg.d_model, cfg.d_ff);
    let x = rand_tensor(&[2, cfg.seq_len, cfg.d_model], &mut rng);
    let tape = Tape::new();
    let out = encoder_layer(tape.constant(&x), &p.map(|t| tape.constant(t)), &cfg, None).unwrap();
    assert_eq!(out.value().data(), x.data());
}

#[test]
fn encoder_layer_golden_value() {
    let mut rng = SeededRng::seed_from_u64(2024);
    let cfg = small_cfg(false);
    let p = LayerParams::init(&cfg, &mut rng);
    let x = rand_tensor(&[1, cfg.seq_len, cfg.d_model], &mut rng);
    let tape = Tape::new();
    let out = encoder_layer(tape.constant(&x), &p.map(|t| tape.constant(t)), &cfg, None).unwrap();
    assert_eq!(out.shape(), x.shape());
    let sum: f64 = out.value().data().iter().sum();
    let first = out.value().data()[0];
    // pinned from the first reviewed implementation
    assert!((sum - GOLDEN_SUM).abs() < 1e-12, "sum {sum:.17}");
    assert!((first - GOLDEN_FIRST).abs() < 1e-12, "first {first:.17}");
}

const GOLDEN_SUM: f64 = 5.659_877_221_912_321;
const GOLDEN_FIRST: f64 = 0.202_827_285_166_074_68;

#[test]
fn empty_stack_returns_projected_input() {
    let mut rng = SeededRng::seed_from_u64(6);
    let mut cfg = small_cfg(true);
    cfg.n_layers = 0;
    let params = EncoderParams::init(&cfg, &mut rng).unwrap();
    let x = one_hot_batch(2, &cfg, &mut rng);
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let out = encoder_forward(tape.constant(&x), &bound, &cfg, None)
        .unwrap()
        .to_tensor();
    let pe = positional_encoding(cfg.seq_len, cfg.d_model).unwrap();
    for b in 0..2 {
        for t in 0..cfg.seq_len {
            for j in 0..cfg.d_model {
                let proj: f64 = (0..cfg.input_dim)
                    .map(|v| x.at(&[b, t, v]) * params.proj_w.at(&[v, j]))
                    .sum::<f64>()
                    + params.proj_b.at(&[j]);
                assert!((out.at(&[b, t, j]) - proj - pe.at(&[t, j])).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn encoder_forward_is_deterministic() {
    let run = || {
        let mut rng = SeededRng::seed_from_u64(7);
        let cfg = small_cfg(true);
        let params = EncoderParams::init(&cfg, &mut rng).unwrap();
        let x = one_hot_batch(3, &cfg, &mut rng);
        let tape = Tape::new();
        let mut drop_rng = SeededRng::seed_from_u64(8);
        let mut dropout = Dropout::new(0.1, &mut drop_rng);
        let out = encoder_forward(tape.constant(&x), &params.bind(&tape), &cfg, Some(&mut dropout)).unwrap();
        out.to_tensor()
    };
    assert_eq!(run().data(), run().data());
}

#[test]
fn encoder_forward_rejects_wrong_window() {
    let mut rng = SeededRng::seed_from_u64(9);
    let cfg = small_cfg(true);
    let params = EncoderParams::init(&cfg, &mut rng).unwrap();
    let tape = Tape::new();
    let x = Tensor::zeros(&[1, cfg.seq_len + 1, cfg.input_dim]).unwrap();
    assert!(encoder_forward(tape.constant(&x), &params.bind(&tape), &cfg, None).is_err());
}

#[test]
fn config_validation() {
    assert!(EncoderConfig::default().validate().is_ok());
    let bad = EncoderConfig {
        d_model: 10,
        n_heads: 4,
        ..Default::default()
    };
    assert!(bad.validate().is_err());
    let bad = EncoderConfig {
        dropout_rate: 1.0,
        ..Default::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn encoder_gradients_match_finite_differences() {
    let mut rng = SeededRng::seed_from_u64(10);
    let cfg = small_cfg(true);
    let params = EncoderParams::init(&cfg, &mut rng).unwrap();
    let x = one_hot_batch(2, &cfg, &mut rng);
    let mut flat = Vec::new();
    params.visit(&mut |_, t| flat.push(t.clone()));
    let report = finite_diff_check(
        |tape, vars: &[Var<'_>]| {
            // map and visit share one field order
            let mut it = vars.iter().copied();
            let bound = params.map(|_| it.next().unwrap());
            let out = encoder_forward(tape.constant(&x), &bound, &cfg, None).unwrap();
            let n = out.numel() as f64;
            Ok(out.sum().scale(1.0 / n))
        },
        &flat,
        1e-5,
        1e-3,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

fn permuted_rows(x: &Tensor, axis_len: usize, perm: &[usize]) -> Tensor {
    // permutes the second axis of a [B, T, V] tensor
    let shape = x.shape().to_vec();
    let inner = shape[2];
    let mut data = vec![0.0; x.numel()];
    for b in 0..shape[0] {
        for (dst, &src) in perm.iter().enumerate() {
            let s = (b * axis_len + src) * inner;
            let d = (b * axis_len + dst) * inner;
            data[d..d + inner].copy_from_slice(&x.data()[s..s + inner]);
        }
    }
    Tensor::new(&shape, data).unwrap()
}

#[test]
fn attention_rows_sum_to_one_and_equivariance() {
    let mut rng = SeededRng::seed_from_u64(11);
    let cfg = small_cfg(false);
    let params = EncoderParams::init(&cfg, &mut rng).unwrap();
    let x = one_hot_batch(3, &cfg, &mut rng);
    let tape = Tape::new();
    let bound = params.bind(&tape);

    let h = input_projection(tape.constant(&x), &bound.proj_w, &bound.proj_b).unwrap();
    let (_, w) = multi_head_attention_with_weights(h, &bound.layers[0], cfg.n_heads).unwrap();
    for row in w.value().data().chunks_exact(cfg.seq_len) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    let out = encoder_forward(tape.constant(&x), &bound, &cfg, None)
        .unwrap()
        .to_tensor();
    let perm = [3, 0, 4, 1, 2];
    let xp = permuted_rows(&x, cfg.seq_len, &perm);
    let outp = encoder_forward(tape.constant(&xp), &bound, &cfg, None)
        .unwrap()
        .to_tensor();
    let expected = permuted_rows(&out, cfg.seq_len, &perm);
    for (a, b) in outp.data().iter().zip(expected.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}
