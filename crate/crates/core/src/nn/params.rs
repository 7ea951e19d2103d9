use rand::Rng;

use super::{EncoderConfig, NnError};
use crate::autodiff::{Tape, Tensor, Var};
use crate::SeededRng;

/// Uniform Glorot initialization for a `fan_in × fan_out` matrix.
pub fn xavier_uniform(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(&[fan_in, fan_out], data).expect("positive dims")
}

pub(crate) fn zeros(n: usize) -> Tensor {
    Tensor::zeros(&[n]).expect("positive dims")
}

pub(crate) fn ones(n: usize) -> Tensor {
    Tensor::full(&[n], 1.0).expect("positive dims")
}

/// Weights of one encoder layer. `P` is [`Tensor`] for stored parameters and
/// [`Var`] once bound to a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<P = Tensor> {
    pub wq: P,
    pub wk: P,
    pub wv: P,
    pub wo: P,
    pub w1: P,
    pub w2: P,
    pub ln1_gain: P,
    pub ln1_bias: P,
    pub ln2_gain: P,
    pub ln2_bias: P,
}

impl LayerParams {
    pub fn init(cfg: &EncoderConfig, rng: &mut SeededRng) -> Self {
        let d = cfg.d_model;
        Self {
            wq: xavier_uniform(d, d, rng),
            wk: xavier_uniform(d, d, rng),
            wv: xavier_uniform(d, d, rng),
            wo: xavier_uniform(d, d, rng),
            w1: xavier_uniform(d, cfg.d_ff, rng),
            w2: xavier_uniform(cfg.d_ff, d, rng),
            ln1_gain: ones(d),
            ln1_bias: zeros(d),
            ln2_gain: ones(d),
            ln2_bias: zeros(d),
        }
    }
}

impl<P> LayerParams<P> {
    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> LayerParams<Q> {
        LayerParams {
            wq: f(&self.wq),
            wk: f(&self.wk),
            wv: f(&self.wv),
            wo: f(&self.wo),
            w1: f(&self.w1),
            w2: f(&self.w2),
            ln1_gain: f(&self.ln1_gain),
            ln1_bias: f(&self.ln1_bias),
            ln2_gain: f(&self.ln2_gain),
            ln2_bias: f(&self.ln2_bias),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        f(format!("{prefix}.wq"), &self.wq);
        f(format!("{prefix}.wk"), &self.wk);
        f(format!("{prefix}.wv"), &self.wv);
        f(format!("{prefix}.wo"), &self.wo);
        f(format!("{prefix}.w1"), &self.w1);
        f(format!("{prefix}.w2"), &self.w2);
        f(format!("{prefix}.ln1_gain"), &self.ln1_gain);
        f(format!("{prefix}.ln1_bias"), &self.ln1_bias);
        f(format!("{prefix}.ln2_gain"), &self.ln2_gain);
        f(format!("{prefix}.ln2_bias"), &self.ln2_bias);
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut P)) {
        f(format!("{prefix}.wq"), &mut self.wq);
        f(format!("{prefix}.wk"), &mut self.wk);
        f(format!("{prefix}.wv"), &mut self.wv);
        f(format!("{prefix}.wo"), &mut self.wo);
        f(format!("{prefix}.w1"), &mut self.w1);
        f(format!("{prefix}.w2"), &mut self.w2);
        f(format!("{prefix}.ln1_gain"), &mut self.ln1_gain);
        f(format!("{prefix}.ln1_bias"), &mut self.ln1_bias);
        f(format!("{prefix}.ln2_gain"), &mut self.ln2_gain);
        f(format!("{prefix}.ln2_bias"), &mut self.ln2_bias);
    }
}

/// Input projection plus the layer stack.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<P = Tensor> {
    /// `input_dim × d_model`; replaces a token embedding table.
    pub proj_w: P,
    pub proj_b: P,
    pub layers: Vec<LayerParams<P>>,
}

impl EncoderParams {
    pub fn init(cfg: &EncoderConfig, rng: &mut SeededRng) -> Result<Self, NnError> {
        cfg.validate()?;
        let proj_w = xavier_uniform(cfg.input_dim, cfg.d_model, rng);
        let layers = (0..cfg.n_layers).map(|_| LayerParams::init(cfg, rng)).collect();
        Ok(Self {
            proj_w,
            proj_b: zeros(cfg.d_model),
            layers,
        })
    }

    /// Records every tensor as a trainable leaf on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape) -> EncoderParams<Var<'t>> {
        self.map(|t| tape.param(t))
    }

    /// Expected `(name, shape)` list for `cfg`, in visiting order.
    pub fn expected_shapes(cfg: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
        let (d, f) = (cfg.d_model, cfg.d_ff);
        let mut out = vec![
            ("encoder.proj_w".to_string(), vec![cfg.input_dim, d]),
            ("encoder.proj_b".to_string(), vec![d]),
        ];
        for l in 0..cfg.n_layers {
            let p = format!("encoder.layers.{l}");
            for (n, s) in [
                ("wq", vec![d, d]),
                ("wk", vec![d, d]),
                ("wv", vec![d, d]),
                ("wo", vec![d, d]),
                ("w1", vec![d, f]),
                ("w2", vec![f, d]),
                ("ln1_gain", vec![d]),
                ("ln1_bias", vec![d]),
                ("ln2_gain", vec![d]),
                ("ln2_bias", vec![d]),
            ] {
                out.push((format!("{p}.{n}"), s));
            }
        }
        out
    }
}

impl<P> EncoderParams<P> {
    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> EncoderParams<Q> {
        EncoderParams {
            proj_w: f(&self.proj_w),
            proj_b: f(&self.proj_b),
            layers: self.layers.iter().map(|l| l.map(&mut f)).collect(),
        }
    }

    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a P)) {
        f("encoder.proj_w".into(), &self.proj_w);
        f("encoder.proj_b".into(), &self.proj_b);
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&format!("encoder.layers.{i}"), f);
        }
    }

    pub fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(String, &'a mut P)) {
        f("encoder.proj_w".into(), &mut self.proj_w);
        f("encoder.proj_b".into(), &mut self.proj_b);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&format!("encoder.layers.{i}"), f);
        }
    }
}
