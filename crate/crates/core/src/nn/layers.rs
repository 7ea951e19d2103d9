use rand::Rng;

use super::{EncoderConfig, EncoderParams, LayerParams, NnError};
use crate::autodiff::{Tensor, TensorError, Var};
use crate::SeededRng;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Inverted dropout driven by an explicit generator. Absent in evaluation.
pub struct Dropout<'r> {
    rate: f64,
    rng: &'r mut SeededRng,
}

impl<'r> Dropout<'r> {
    pub fn new(rate: f64, rng: &'r mut SeededRng) -> Self {
        Self { rate, rng }
    }

    pub fn rng(&mut self) -> &mut SeededRng {
        self.rng
    }

    pub fn apply<'t>(&mut self, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.rate;
        let mask = (0..x.numel())
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        x.mul_const(mask)
    }
}

fn apply_dropout<'t>(x: Var<'t>, dropout: Option<&mut Dropout<'_>>) -> Result<Var<'t>, TensorError> {
    match dropout {
        Some(d) => d.apply(x),
        None => Ok(x),
    }
}

fn rank3(op: &'static str, x: &Var<'_>) -> Result<(usize, usize, usize), TensorError> {
    match x.shape()[..] {
        [b, t, d] => Ok((b, t, d)),
        _ => Err(TensorError::Rank {
            op,
            expected: 3,
            shape: x.shape(),
        }),
    }
}

/// Applies `x·w + b` to each row of the trailing axis of a `[B, T, in]` tensor.
pub(crate) fn time_distributed<'t>(x: Var<'t>, w: &Var<'t>, b: &Var<'t>) -> Result<Var<'t>, TensorError> {
    let (bs, t, _) = rank3("time_distributed", &x)?;
    let out_dim = w.shape()[1];
    x.reshape(&[bs * t, x.shape()[2]])?
        .matmul(w)?
        .add_bias(b)?
        .reshape(&[bs, t, out_dim])
}

/// Fully connected projection of `[B, T, V]` sensor vectors to `[B, T, d_model]`.
pub fn input_projection<'t>(x: Var<'t>, w: &Var<'t>, b: &Var<'t>) -> Result<Var<'t>, TensorError> {
    let (_, _, v) = rank3("input_projection", &x)?;
    if w.shape().len() != 2 || w.shape()[0] != v {
        return Err(TensorError::ShapeMismatch {
            op: "input_projection",
            lhs: x.shape(),
            rhs: w.shape(),
        });
    }
    time_distributed(x, w, b)
}

/// Sinusoidal position table of shape `[seq_len, d_model]`.
pub fn positional_encoding(seq_len: usize, d_model: usize) -> Result<Tensor, TensorError> {
    let mut data = vec![0.0; seq_len * d_model];
    for pos in 0..seq_len {
        for i in 0..d_model {
            let pair = (i / 2) as f64 * 2.0;
            let angle = pos as f64 / 10000f64.powf(pair / d_model as f64);
            data[pos * d_model + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(&[seq_len, d_model], data)
}

/// Attention weights `softmax(Q·Kᵀ/√d_k)` for `[..., T, d_k]` inputs.
pub fn attention_weights<'t>(q: &Var<'t>, k: &Var<'t>) -> Result<Var<'t>, TensorError> {
    if q.shape() != k.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "attention",
            lhs: q.shape(),
            rhs: k.shape(),
        });
    }
    let d_k = *q.shape().last().unwrap() as f64;
    Ok(q.batch_matmul(k, true)?.scale(1.0 / d_k.sqrt()).softmax())
}

/// `softmax(Q·Kᵀ/√d_k)·V` over the last two axes. No mask is applied.
pub fn scaled_dot_attention<'t>(q: &Var<'t>, k: &Var<'t>, v: &Var<'t>) -> Result<Var<'t>, TensorError> {
    if k.shape() != v.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "attention",
            lhs: k.shape(),
            rhs: v.shape(),
        });
    }
    attention_weights(q, k)?.batch_matmul(v, false)
}

/// Multi-head self-attention output and the `[B, h, T, T]` weights.
pub fn multi_head_attention_with_weights<'t>(
    x: Var<'t>,
    p: &LayerParams<Var<'t>>,
    n_heads: usize,
) -> Result<(Var<'t>, Var<'t>), TensorError> {
    let (b, t, d) = rank3("multi_head_attention", &x)?;
    if n_heads == 0 || d % n_heads != 0 {
        return Err(TensorError::ShapeMismatch {
            op: "multi_head_attention",
            lhs: x.shape(),
            rhs: vec![n_heads],
        });
    }
    let dk = d / n_heads;
    let flat = x.reshape(&[b * t, d])?;
    let split = |w: &Var<'t>| -> Result<Var<'t>, TensorError> {
        flat.matmul(w)?.reshape(&[b, t, n_heads, dk])?.permute(&[0, 2, 1, 3])
    };
    let (q, k, v) = (split(&p.wq)?, split(&p.wk)?, split(&p.wv)?);
    let weights = attention_weights(&q, &k)?;
    let heads = weights.batch_matmul(&v, false)?;
    let merged = heads.permute(&[0, 2, 1, 3])?.reshape(&[b * t, d])?;
    let out = merged.matmul(&p.wo)?.reshape(&[b, t, d])?;
    Ok((out, weights))
}

pub fn multi_head_attention<'t>(x: Var<'t>, p: &LayerParams<Var<'t>>, n_heads: usize) -> Result<Var<'t>, TensorError> {
    Ok(multi_head_attention_with_weights(x, p, n_heads)?.0)
}

/// Position-wise `gelu(x·W1)·W2`.
fn feed_forward<'t>(x: Var<'t>, p: &LayerParams<Var<'t>>) -> Result<Var<'t>, TensorError> {
    let (b, t, d) = rank3("feed_forward", &x)?;
    x.reshape(&[b * t, d])?
        .matmul(&p.w1)?
        .gelu()
        .matmul(&p.w2)?
        .reshape(&[b, t, d])
}

/// Pre-norm encoder layer: `x + MHA(LN(x))`, then `+ FF(LN(·))`.
pub fn encoder_layer<'t>(
    x: Var<'t>,
    p: &LayerParams<Var<'t>>,
    cfg: &EncoderConfig,
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<Var<'t>, TensorError> {
    let normed = x.layer_norm(&p.ln1_gain, &p.ln1_bias, LAYER_NORM_EPS)?;
    let attn = multi_head_attention(normed, p, cfg.n_heads)?;
    let x = x.add(&apply_dropout(attn, dropout.as_deref_mut())?)?;
    let normed = x.layer_norm(&p.ln2_gain, &p.ln2_bias, LAYER_NORM_EPS)?;
    let ff = feed_forward(normed, p)?;
    x.add(&apply_dropout(ff, dropout)?)
}

/// Projection, optional positional signal, then the layer stack.
/// Output is `[B, T, d_model]`.
pub fn encoder_forward<'t>(
    x: Var<'t>,
    params: &EncoderParams<Var<'t>>,
    cfg: &EncoderConfig,
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<Var<'t>, NnError> {
    let (b, t, v) = rank3("encoder_forward", &x)?;
    if t != cfg.seq_len || v != cfg.input_dim {
        return Err(NnError::Config(format!(
            "input window is {t}x{v}, encoder expects {}x{}",
            cfg.seq_len, cfg.input_dim
        )));
    }
    if params.layers.len() != cfg.n_layers {
        return Err(NnError::Config(format!(
            "{} layers bound, config has {}",
            params.layers.len(),
            cfg.n_layers
        )));
    }
    let mut h = input_projection(x, &params.proj_w, &params.proj_b)?;
    if cfg.use_positional_encoding {
        let pe = positional_encoding(t, cfg.d_model)?;
        let mut tiled = Vec::with_capacity(b * pe.numel());
        for _ in 0..b {
            tiled.extend_from_slice(pe.data());
        }
        let pe = x.tape().constant_owned(Tensor::new(&[b, t, cfg.d_model], tiled)?);
        h = h.add(&pe)?;
    }
    for layer in &params.layers {
        h = encoder_layer(h, layer, cfg, dropout.as_deref_mut())?;
    }
    Ok(h)
}
