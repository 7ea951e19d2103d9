use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::autodiff::{Gradients, Tape, Tensor, TensorError, Var};
use crate::nn::{xavier_uniform, zeros, EncoderConfig, EncoderParams};
use crate::SeededRng;

/// How the `[B, T, d]` encoder output is reduced to one vector per window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Mean,
    Max,
    First,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Number of activity classes C.
    pub n_classes: usize,
    pub head_hidden: usize,
    #[serde(default)]
    pub pooling: Pooling,
}

impl ModelConfig {
    pub fn new(encoder: EncoderConfig, n_classes: usize) -> Self {
        Self {
            encoder,
            n_classes,
            head_hidden: 64,
            pooling: Pooling::Mean,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.encoder.validate()?;
        if self.n_classes == 0 {
            return Err(ModelError::Config("n_classes must be at least 1".into()));
        }
        if self.head_hidden == 0 {
            return Err(ModelError::Config("head_hidden must be at least 1".into()));
        }
        Ok(())
    }

    /// True when two configs produce identically shaped encoders.
    pub fn encoder_compatible(&self, other: &ModelConfig) -> bool {
        let (a, b) = (&self.encoder, &other.encoder);
        a.n_layers == b.n_layers
            && a.d_model == b.d_model
            && a.n_heads == b.n_heads
            && a.d_ff == b.d_ff
            && a.seq_len == b.seq_len
            && a.input_dim == b.input_dim
            && a.use_positional_encoding == b.use_positional_encoding
    }
}

/// Two-layer perceptron `gelu(x·W1 + b1)·W2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead<P = Tensor> {
    pub w1: P,
    pub b1: P,
    pub w2: P,
    pub b2: P,
}

impl MlpHead {
    pub fn init(input: usize, hidden: usize, output: usize, rng: &mut SeededRng) -> Self {
        Self {
            w1: xavier_uniform(input, hidden, rng),
            b1: zeros(hidden),
            w2: xavier_uniform(hidden, output, rng),
            b2: zeros(output),
        }
    }

    fn shapes(input: usize, hidden: usize, output: usize) -> [Vec<usize>; 4] {
        [vec![input, hidden], vec![hidden], vec![hidden, output], vec![output]]
    }
}

impl<P> MlpHead<P> {
    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> MlpHead<Q> {
        MlpHead {
            w1: f(&self.w1),
            b1: f(&self.b1),
            w2: f(&self.w2),
            b2: f(&self.b2),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        f(format!("{prefix}.w1"), &self.w1);
        f(format!("{prefix}.b1"), &self.b1);
        f(format!("{prefix}.w2"), &self.w2);
        f(format!("{prefix}.b2"), &self.b2);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut P)) {
        f(format!("{prefix}.w1"), &mut self.w1);
        f(format!("{prefix}.b1"), &mut self.b1);
        f(format!("{prefix}.w2"), &mut self.w2);
        f(format!("{prefix}.b2"), &mut self.b2);
    }
}

impl<'t> MlpHead<Var<'t>> {
    pub fn forward(&self, x: &Var<'t>) -> Result<Var<'t>, TensorError> {
        x.matmul(&self.w1)?
            .add_bias(&self.b1)?
            .gelu()
            .matmul(&self.w2)?
            .add_bias(&self.b2)
    }
}

/// Parameter groups, used to pick what an optimizer updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Encoder,
    Classifier,
    Decoder,
    Pair,
}

impl ParamGroup {
    fn of(name: &str) -> Self {
        match name.split('.').next() {
            Some("encoder") => Self::Encoder,
            Some("classifier") => Self::Classifier,
            Some("decoder") => Self::Decoder,
            _ => Self::Pair,
        }
    }
}

/// Every trainable weight: encoder, activity classifier, and the two
/// pretraining heads. The pretraining heads are absent after
/// [`super::transfer_encoder`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<P = Tensor> {
    pub encoder: EncoderParams<P>,
    /// `d_model → head_hidden → C`.
    pub classifier: MlpHead<P>,
    /// Per-timestep `d_model → head_hidden → V`.
    pub decoder: Option<MlpHead<P>>,
    /// `2·d_model → head_hidden → 2`.
    pub pair: Option<MlpHead<P>>,
}

impl ModelParams {
    /// Full parameter set with all three heads.
    pub fn init(cfg: &ModelConfig, rng: &mut SeededRng) -> Result<Self, ModelError> {
        cfg.validate()?;
        let e = &cfg.encoder;
        let encoder = EncoderParams::init(e, rng)?;
        let classifier = MlpHead::init(e.d_model, cfg.head_hidden, cfg.n_classes, rng);
        let decoder = MlpHead::init(e.d_model, cfg.head_hidden, e.input_dim, rng);
        let pair = MlpHead::init(2 * e.d_model, cfg.head_hidden, 2, rng);
        Ok(Self {
            encoder,
            classifier,
            decoder: Some(decoder),
            pair: Some(pair),
        })
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> ModelParams<Var<'t>> {
        self.map(|t| tape.param(t))
    }

    /// Expected `(name, shape)` list in visiting order.
    pub fn expected_shapes(cfg: &ModelConfig, decoder: bool, pair: bool) -> Vec<(String, Vec<usize>)> {
        let e = &cfg.encoder;
        let mut out = EncoderParams::expected_shapes(e);
        let mut head = |prefix: &str, shapes: [Vec<usize>; 4]| {
            for (n, s) in ["w1", "b1", "w2", "b2"].iter().zip(shapes) {
                out.push((format!("{prefix}.{n}"), s));
            }
        };
        head("classifier", MlpHead::shapes(e.d_model, cfg.head_hidden, cfg.n_classes));
        if decoder {
            head("decoder", MlpHead::shapes(e.d_model, cfg.head_hidden, e.input_dim));
        }
        if pair {
            head("pair", MlpHead::shapes(2 * e.d_model, cfg.head_hidden, 2));
        }
        out
    }

    /// Checks every tensor shape against `cfg`.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<(), ModelError> {
        let expected = Self::expected_shapes(cfg, self.decoder.is_some(), self.pair.is_some());
        let mut actual = Vec::new();
        self.visit(&mut |name, t| actual.push((name, t.shape().to_vec())));
        if actual.len() != expected.len() {
            return Err(ModelError::Config(format!(
                "{} parameter tensors, config implies {}",
                actual.len(),
                expected.len()
            )));
        }
        for ((name, shape), (_, want)) in actual.iter().zip(&expected) {
            if shape != want {
                return Err(ModelError::Config(format!(
                    "parameter {name} has shape {shape:?}, config implies {want:?}"
                )));
            }
        }
        Ok(())
    }

    /// Trainable tensors belonging to `groups`, in visiting order, with
    /// gradient buffers allocated.
    pub fn select_mut(&mut self, groups: &[ParamGroup]) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        self.visit_mut(&mut |name, t| {
            if groups.contains(&ParamGroup::of(&name)) {
                t.ensure_grad();
                out.push(t);
            }
        });
        out
    }

    pub fn zero_grad(&mut self) {
        self.visit_mut(&mut |_, t| t.zero_grad());
    }

    /// Adds gradients from `grads` into the buffers of the tensors in
    /// `groups`. `bound` must come from [`ModelParams::bind`] on `self`.
    pub fn accumulate_grads(
        &mut self,
        bound: &ModelParams<Var<'_>>,
        grads: &Gradients,
        groups: &[ParamGroup],
    ) -> Result<(), TensorError> {
        let mut vars = Vec::new();
        bound.visit(&mut |_, v| vars.push(*v));
        let mut vars = vars.into_iter();
        let mut result = Ok(());
        self.visit_mut(&mut |name, t| {
            let Some(v) = vars.next() else { return };
            if result.is_ok() && groups.contains(&ParamGroup::of(&name)) {
                t.ensure_grad();
                result = grads.accumulate_into(v, t);
            }
        });
        result
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.numel());
        n
    }

    /// Concatenated little-endian bytes of the encoder tensors.
    pub fn encoder_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encoder.visit(&mut |_, t| out.extend(t.to_le_bytes()));
        out
    }
}

impl<P> ModelParams<P> {
    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> ModelParams<Q> {
        ModelParams {
            encoder: self.encoder.map(&mut f),
            classifier: self.classifier.map(&mut f),
            decoder: self.decoder.as_ref().map(|h| h.map(&mut f)),
            pair: self.pair.as_ref().map(|h| h.map(&mut f)),
        }
    }

    /// Visits `(name, tensor)` in the fixed order used by checkpoints.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a P)) {
        self.encoder.visit(f);
        self.classifier.visit("classifier", f);
        if let Some(h) = &self.decoder {
            h.visit("decoder", f);
        }
        if let Some(h) = &self.pair {
            h.visit("pair", f);
        }
    }

    pub fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(String, &'a mut P)) {
        self.encoder.visit_mut(f);
        self.classifier.visit_mut("classifier", f);
        if let Some(h) = &mut self.decoder {
            h.visit_mut("decoder", f);
        }
        if let Some(h) = &mut self.pair {
            h.visit_mut("pair", f);
        }
    }
}
