use rand::{Rng, SeedableRng};

use super::*;
use crate::autodiff::{finite_diff_check, Tape, Tensor};
use crate::model::{ModelConfig, ModelParams, ParamGroup};
use crate::nn::EncoderConfig;
use crate::train::{Adam, AdamConfig};
use crate::SeededRng;

fn cfg(dropout: f64) -> ModelConfig {
    ModelConfig {
        head_hidden: 6,
        ..ModelConfig::new(
            EncoderConfig {
                n_layers: 1,
                d_model: 8,
                n_heads: 2,
                d_ff: 8,
                seq_len: 8,
                input_dim: 5,
                dropout_rate: dropout,
                use_positional_encoding: true,
            },
            3,
        )
    }
}

fn windows(n: usize, c: &ModelConfig, rng: &mut SeededRng) -> Vec<Tensor> {
    let (t, v) = (c.encoder.seq_len, c.encoder.input_dim);
    (0..n)
        .map(|_| {
            let mut data = vec![0.0; t * v];
            for row in data.chunks_exact_mut(v) {
                row[rng.gen_range(0..v)] = 1.0;
            }
            Tensor::new(&[t, v], data).unwrap()
        })
        .collect()
}

#[test]
fn plan_needs_two_windows() {
    let mut rng = SeededRng::seed_from_u64(0);
    assert_eq!(plan_pairs(1, &mut rng), Err(SslError::BatchTooSmall(1)));
    let p = plan_pairs(2, &mut rng).unwrap();
    assert_eq!(p.labels.iter().filter(|&&l| l == SAME).count(), 1);
    let neg = p.labels.iter().position(|&l| l == DIFFERENT).unwrap();
    assert_ne!(p.left[neg], p.right[neg]);
}

#[test]
fn plan_properties_over_many_draws() {
    let mut rng = SeededRng::seed_from_u64(1);
    for n in 2..=64 {
        for _ in 0..50 {
            let p = plan_pairs(n, &mut rng).unwrap();
            assert_eq!(p.labels.iter().filter(|&&l| l == SAME).count(), n.div_ceil(2));
            assert_eq!(p.labels.iter().filter(|&&l| l == DIFFERENT).count(), n / 2);
            for k in 0..n {
                assert_eq!(p.left[k] == p.right[k], p.labels[k] == SAME);
                assert!(p.right[k] < n);
            }
        }
    }
}

#[test]
fn four_window_batch() {
    let mut rng = SeededRng::seed_from_u64(2);
    let c = cfg(0.0);
    let params = ModelParams::init(&c, &mut rng).unwrap();
    let xs = windows(4, &c, &mut rng);
    let refs: Vec<&Tensor> = xs.iter().collect();
    let tape = Tape::new();
    let pb = build_pair_batch(
        &refs,
        &params.bind(&tape),
        &c,
        &AugmentConfig::default(),
        &mut rng,
        None,
    )
    .unwrap();
    assert_eq!(pb.pair_labels().iter().filter(|&&l| l == SAME).count(), 2);
    assert_eq!(pb.reconstructions.shape(), vec![8, 8, 5]);
    assert_eq!(pb.pair_logits.shape(), vec![4, 2]);
    let targets = pb.targets.to_tensor();
    for r in 0..8 {
        assert_eq!(targets.index_first(r), xs[r % 4]);
    }
    let pooled_left = pb.encodings_left.to_tensor();
    assert_eq!(pooled_left.shape(), &[4, 8]);
}

#[test]
fn loss_identity_and_gamma_range() {
    let mut rng = SeededRng::seed_from_u64(3);
    let c = cfg(0.0);
    let params = ModelParams::init(&c, &mut rng).unwrap();
    let xs = windows(6, &c, &mut rng);
    let refs: Vec<&Tensor> = xs.iter().collect();
    for gamma in [0.0, 0.25, 0.5, 1.0] {
        let tape = Tape::new();
        let pb = build_pair_batch(
            &refs,
            &params.bind(&tape),
            &c,
            &AugmentConfig::default(),
            &mut rng,
            None,
        )
        .unwrap();
        let v = hybrid_loss(&pb, gamma).unwrap().value();
        assert_eq!(v.total, gamma * v.recon + v.pair);
        if gamma == 0.0 {
            assert_eq!(v.total, v.pair);
        }
        assert!(v.total.is_finite() && v.total > 0.0);
    }
    let tape = Tape::new();
    let pb = build_pair_batch(
        &refs,
        &params.bind(&tape),
        &c,
        &AugmentConfig::default(),
        &mut rng,
        None,
    )
    .unwrap();
    assert_eq!(hybrid_loss(&pb, 1.5).unwrap_err(), SslError::Gamma(1.5));
    assert!(hybrid_loss(&pb, -0.1).is_err());
}

#[test]
fn formula_arithmetic() {
    let tape = Tape::new();
    let la = tape.constant(&Tensor::scalar(2.0));
    let lc = tape.constant(&Tensor::scalar(0.7));
    let total = la.scale(0.5).add(&lc).unwrap();
    assert!((total.item() - 1.7).abs() < 1e-15);
}

#[test]
fn zero_gamma_gives_zero_decoder_gradients() {
    let mut rng = SeededRng::seed_from_u64(4);
    let c = cfg(0.0);
    let mut params = ModelParams::init(&c, &mut rng).unwrap();
    let xs = windows(4, &c, &mut rng);
    let refs: Vec<&Tensor> = xs.iter().collect();
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let pb = build_pair_batch(&refs, &bound, &c, &AugmentConfig::default(), &mut rng, None).unwrap();
    let loss = hybrid_loss(&pb, 0.0).unwrap();
    let grads = tape.backward(loss.total).unwrap();
    params
        .accumulate_grads(&bound, &grads, &[ParamGroup::Decoder, ParamGroup::Pair])
        .unwrap();
    let dec = params.decoder.as_ref().unwrap();
    for t in [&dec.w1, &dec.b1, &dec.w2, &dec.b2] {
        assert!(t.grad().unwrap().iter().all(|&g| g == 0.0));
    }
    let pair = params.pair.as_ref().unwrap();
    assert!(pair.w2.grad().unwrap().iter().any(|&g| g != 0.0));
}

#[test]
fn pretrain_step_leaves_classifier_alone() {
    let mut rng = SeededRng::seed_from_u64(5);
    let c = cfg(0.1);
    let mut params = ModelParams::init(&c, &mut rng).unwrap();
    let before = params.clone();
    let xs = windows(4, &c, &mut rng);
    let refs: Vec<&Tensor> = xs.iter().collect();
    let mut adam = Adam::new(AdamConfig::default());
    let v = pretrain_step(
        &mut params,
        &c,
        &refs,
        0.5,
        &AugmentConfig::default(),
        &mut adam,
        &mut rng,
    )
    .unwrap();
    assert!(v.total.is_finite() && v.total > 0.0);
    let bytes = |h: &crate::model::MlpHead| [&h.w1, &h.b1, &h.w2, &h.b2].map(|t| t.to_le_bytes());
    assert_eq!(bytes(&params.classifier), bytes(&before.classifier));
    assert_ne!(params.encoder_bytes(), before.encoder_bytes());
    assert_ne!(params.decoder, before.decoder);
    assert_ne!(params.pair, before.pair);
}

/// Whole pretraining graph against central differences, on a fixed
/// 2-window batch.
#[test]
fn hybrid_loss_gradients_match_finite_differences() {
    let mut rng = SeededRng::seed_from_u64(6);
    let c = cfg(0.0);
    let params = ModelParams::init(&c, &mut rng).unwrap();
    let xs = windows(2, &c, &mut rng);
    let refs: Vec<&Tensor> = xs.iter().collect();
    let mut flat = Vec::new();
    params.visit(&mut |_, t| flat.push(t.clone()));
    let report = finite_diff_check(
        |_, vars| {
            let mut it = vars.iter().copied();
            let bound = params.map(|_| it.next().unwrap());
            let mut rng = SeededRng::seed_from_u64(60);
            let pb = build_pair_batch(&refs, &bound, &c, &AugmentConfig::default(), &mut rng, None).unwrap();
            Ok(hybrid_loss(&pb, 0.5).unwrap().total)
        },
        &flat,
        1e-5,
        1e-3,
    )
    .unwrap();
    assert!(report.passed(), "max rel err {}", report.max_rel_err());
}

#[test]
fn pretrain_validates_inputs() {
    let mut rng = SeededRng::seed_from_u64(7);
    let c = cfg(0.0);
    let mut params = ModelParams::init(&c, &mut rng).unwrap();
    let ws: Vec<crate::data::SampleWindow> = windows(3, &c, &mut rng)
        .into_iter()
        .enumerate()
        .map(|(i, x)| crate::data::SampleWindow {
            x,
            label: 0,
            start_time: chrono::NaiveDateTime::default(),
            start_event: i,
        })
        .collect();
    let bad_gamma = PretrainConfig {
        gamma: 2.0,
        ..PretrainConfig::default()
    };
    assert!(matches!(
        pretrain(&mut params, &c, &ws, &bad_gamma, |_, _| {}),
        Err(SslError::Gamma(_))
    ));
    let too_big = PretrainConfig {
        batch_size: 4,
        ..PretrainConfig::default()
    };
    assert!(matches!(
        pretrain(&mut params, &c, &ws, &too_big, |_, _| {}),
        Err(SslError::NotEnoughWindows { .. })
    ));
    let ok = PretrainConfig {
        batch_size: 2,
        steps: 3,
        ..PretrainConfig::default()
    };
    let run = |p: &mut ModelParams| pretrain(p, &c, &ws, &ok, |_, _| {}).unwrap();
    let mut p2 = params.clone();
    let a = run(&mut params);
    let b = run(&mut p2);
    assert_eq!(a, b);
    assert_eq!(a.len(), 3);
    params.decoder = None;
    assert_eq!(
        pretrain(&mut params, &c, &ws, &ok, |_, _| {}),
        Err(SslError::MissingHeads)
    );
}
