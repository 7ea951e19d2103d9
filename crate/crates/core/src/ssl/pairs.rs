use rand::seq::SliceRandom;
use rand::Rng;

use super::augment::{make_views, AugmentConfig, ViewPair};
use super::SslError;
use crate::autodiff::{Tensor, Var};
use crate::model::{ModelConfig, ModelParams};
use crate::nn::Dropout;
use crate::SeededRng;

/// Pair class index for two views of the same window.
pub const SAME: usize = 1;
/// Pair class index for views of different windows.
pub const DIFFERENT: usize = 0;

/// Which sources feed each of the `N` pairs.
///
/// Pair `k` always takes `view_i` of source `k` on the left. Positive pairs
/// take `view_j` of the same source on the right; negative pairs take
/// `view_j` of a different source drawn uniformly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPlan {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub labels: Vec<usize>,
}

/// `⌈N/2⌉` positive and `⌊N/2⌋` negative pairs, positions shuffled.
pub fn plan_pairs(n: usize, rng: &mut SeededRng) -> Result<PairPlan, SslError> {
    if n < 2 {
        return Err(SslError::BatchTooSmall(n));
    }
    let mut labels: Vec<usize> = (0..n)
        .map(|k| if k < n.div_ceil(2) { SAME } else { DIFFERENT })
        .collect();
    labels.shuffle(rng);
    let right = labels
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            if l == SAME {
                k
            } else {
                let m = rng.gen_range(0..n - 1);
                if m >= k {
                    m + 1
                } else {
                    m
                }
            }
        })
        .collect();
    Ok(PairPlan {
        left: (0..n).collect(),
        right,
        labels,
    })
}

/// Encoded views and head outputs for one pretraining batch.
///
/// The `2N` views are encoded as one batch: rows `0..N` hold `view_i` of
/// each source and rows `N..2N` hold `view_j`.
#[derive(Debug, Clone)]
pub struct PairBatch<'t> {
    pub views: Vec<ViewPair>,
    pub plan: PairPlan,
    /// `[N, d_model]`
    pub encodings_left: Var<'t>,
    /// `[N, d_model]`
    pub encodings_right: Var<'t>,
    /// `[N, 2]`
    pub pair_logits: Var<'t>,
    /// `[2N, T, V]`
    pub reconstructions: Var<'t>,
    /// `[2N, T, V]`; row `r` is the original window behind view row `r`.
    pub targets: Var<'t>,
}

impl PairBatch<'_> {
    pub fn n(&self) -> usize {
        self.views.len()
    }

    pub fn pair_labels(&self) -> &[usize] {
        &self.plan.labels
    }
}

/// Builds views, pairs them, and runs the encoder, decoder and pair head.
/// Dropout is applied inside the encoder when `dropout` is given.
pub fn build_pair_batch<'t>(
    windows: &[&Tensor],
    params: &ModelParams<Var<'t>>,
    cfg: &ModelConfig,
    aug: &AugmentConfig,
    rng: &mut SeededRng,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<PairBatch<'t>, SslError> {
    let n = windows.len();
    if n < 2 {
        return Err(SslError::BatchTooSmall(n));
    }
    let views: Vec<ViewPair> = windows
        .iter()
        .enumerate()
        .map(|(k, x)| make_views(x, k, aug, rng))
        .collect();
    let plan = plan_pairs(n, rng)?;

    let tape = params.encoder.proj_w.tape();
    let stacked: Vec<&Tensor> = views
        .iter()
        .map(|v| &v.view_i)
        .chain(views.iter().map(|v| &v.view_j))
        .collect();
    let x = tape.constant_owned(Tensor::stack(&stacked)?);
    let originals: Vec<&Tensor> = views.iter().chain(views.iter()).map(|v| &v.original).collect();
    let targets = tape.constant_owned(Tensor::stack(&originals)?);

    let enc = params.encode(x, cfg, dropout)?;
    let reconstructions = params.decode(&enc)?;
    let right_rows: Vec<usize> = plan.right.iter().map(|&m| n + m).collect();
    let encodings_left = enc.pooled.gather_rows(&plan.left)?;
    let encodings_right = enc.pooled.gather_rows(&right_rows)?;
    let pair_logits = params.pair_logits(&encodings_left, &encodings_right)?;
    Ok(PairBatch {
        views,
        plan,
        encodings_left,
        encodings_right,
        pair_logits,
        reconstructions,
        targets,
    })
}

/// Scalar values of the three loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridLossValue {
    pub total: f64,
    pub recon: f64,
    pub pair: f64,
    pub gamma: f64,
}

/// `L = γ·L_a + L_c` on the tape.
#[derive(Debug, Clone, Copy)]
pub struct HybridLoss<'t> {
    pub total: Var<'t>,
    pub recon: Var<'t>,
    pub pair: Var<'t>,
    pub gamma: f64,
}

impl HybridLoss<'_> {
    pub fn value(&self) -> HybridLossValue {
        HybridLossValue {
            total: self.total.item(),
            recon: self.recon.item(),
            pair: self.pair.item(),
            gamma: self.gamma,
        }
    }
}

/// `L_a` is the squared l2 distance between each of the `2N`
/// reconstructions and its original window, averaged over the `2N` views;
/// `L_c` is two-class cross-entropy of the pair head.
pub fn hybrid_loss<'t>(pb: &PairBatch<'t>, gamma: f64) -> Result<HybridLoss<'t>, SslError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(SslError::Gamma(gamma));
    }
    let recon = pb.reconstructions.l2_loss(&pb.targets)?;
    let pair = pb.pair_logits.cross_entropy(&pb.plan.labels)?;
    let total = recon.scale(gamma).add(&pair)?;
    Ok(HybridLoss {
        total,
        recon,
        pair,
        gamma,
    })
}
