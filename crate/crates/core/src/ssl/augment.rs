use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::SeededRng;

/// View augmentations, applied in field order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Probability of zeroing each active bit.
    pub sensor_dropout: f64,
    /// Probability of masking one contiguous span of rows.
    pub time_mask_prob: f64,
    /// Span length; `None` means `⌊T/8⌋`.
    pub time_mask_len: Option<usize>,
    /// Probability of swapping each row with the next one.
    pub jitter_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            sensor_dropout: 0.1,
            time_mask_prob: 1.0,
            time_mask_len: None,
            jitter_prob: 0.05,
        }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        Self {
            sensor_dropout: 0.0,
            time_mask_prob: 0.0,
            time_mask_len: None,
            jitter_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("sensor_dropout", self.sensor_dropout),
            ("time_mask_prob", self.time_mask_prob),
            ("jitter_prob", self.jitter_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} is not a probability"));
            }
        }
        Ok(())
    }
}

/// Augments one `[T, V]` window.
pub fn augment(x: &Tensor, cfg: &AugmentConfig, rng: &mut SeededRng) -> Tensor {
    let (t, v) = (x.shape()[0], x.shape()[1]);
    let mut data = x.data().to_vec();

    if cfg.sensor_dropout > 0.0 {
        for b in data.iter_mut().filter(|b| **b != 0.0) {
            if rng.gen_bool(cfg.sensor_dropout) {
                *b = 0.0;
            }
        }
    }

    let span = cfg.time_mask_len.unwrap_or(t / 8).min(t);
    if span > 0 && cfg.time_mask_prob > 0.0 && rng.gen_bool(cfg.time_mask_prob) {
        let start = rng.gen_range(0..=t - span);
        data[start * v..(start + span) * v].iter_mut().for_each(|b| *b = 0.0);
    }

    if cfg.jitter_prob > 0.0 {
        let mut i = 0;
        while i + 1 < t {
            if rng.gen_bool(cfg.jitter_prob) {
                let (a, b) = data.split_at_mut((i + 1) * v);
                a[i * v..].swap_with_slice(&mut b[..v]);
                i += 2;
            } else {
                i += 1;
            }
        }
    }
    Tensor::new(&[t, v], data).expect("shape preserved")
}

/// Two independently augmented copies of a window plus the original.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub view_i: Tensor,
    pub view_j: Tensor,
    pub original: Tensor,
    pub source_index: usize,
}

pub fn make_views(x: &Tensor, source_index: usize, cfg: &AugmentConfig, rng: &mut SeededRng) -> ViewPair {
    ViewPair {
        view_i: augment(x, cfg, rng),
        view_j: augment(x, cfg, rng),
        original: x.clone(),
        source_index,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn window(t: usize, v: usize, rng: &mut SeededRng) -> Tensor {
        let mut data = vec![0.0; t * v];
        for row in data.chunks_exact_mut(v) {
            row[rng.gen_range(0..v)] = 1.0;
        }
        Tensor::new(&[t, v], data).unwrap()
    }

    fn nonzero_rows(x: &Tensor) -> usize {
        (0..x.shape()[0])
            .filter(|&r| x.row(r).iter().any(|&b| b != 0.0))
            .count()
    }

    #[test]
    fn identity_augmentation() {
        let mut rng = SeededRng::seed_from_u64(1);
        let x = window(16, 5, &mut rng);
        let p = make_views(&x, 3, &AugmentConfig::identity(), &mut rng);
        assert_eq!(p.view_i, x);
        assert_eq!(p.view_j, x);
        assert_eq!(p.original, x);
        assert_eq!(p.source_index, 3);
    }

    #[test]
    fn full_dropout_zeroes_everything() {
        let mut rng = SeededRng::seed_from_u64(2);
        let x = window(16, 5, &mut rng);
        let cfg = AugmentConfig {
            sensor_dropout: 1.0,
            ..AugmentConfig::identity()
        };
        let p = make_views(&x, 0, &cfg, &mut rng);
        assert!(p.view_i.data().iter().chain(p.view_j.data()).all(|&b| b == 0.0));
    }

    #[test]
    fn time_mask_zeroes_a_contiguous_span() {
        let mut rng = SeededRng::seed_from_u64(3);
        let cfg = AugmentConfig {
            time_mask_prob: 1.0,
            time_mask_len: Some(4),
            ..AugmentConfig::identity()
        };
        for _ in 0..50 {
            let x = window(16, 5, &mut rng);
            let y = augment(&x, &cfg, &mut rng);
            assert_eq!(nonzero_rows(&x) - nonzero_rows(&y), 4);
            let zero: Vec<usize> = (0..16).filter(|&r| y.row(r).iter().all(|&b| b == 0.0)).collect();
            assert_eq!(zero.len(), 4);
            assert_eq!(zero[3] - zero[0], 3);
        }
    }

    #[test]
    fn default_mask_length_is_an_eighth_of_the_window() {
        let mut rng = SeededRng::seed_from_u64(4);
        let cfg = AugmentConfig {
            time_mask_prob: 1.0,
            ..AugmentConfig::identity()
        };
        let x = window(32, 5, &mut rng);
        assert_eq!(nonzero_rows(&augment(&x, &cfg, &mut rng)), 28);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn jitter_permutes_rows() {
        let mut rng = SeededRng::seed_from_u64(5);
        let cfg = AugmentConfig {
            jitter_prob: 0.5,
            ..AugmentConfig::identity()
        };
        let x = window(32, 7, &mut rng);
        let y = augment(&x, &cfg, &mut rng);
        let mut a: Vec<Vec<u64>> = (0..32)
            .map(|r| x.row(r).iter().map(|b| b.to_bits()).collect())
            .collect();
        let mut b: Vec<Vec<u64>> = (0..32)
            .map(|r| y.row(r).iter().map(|b| b.to_bits()).collect())
            .collect();
        for r in 0..32usize {
            // a row moves at most one position
            let near = [r.saturating_sub(1), r, (r + 1).min(31)];
            assert!(near.iter().any(|&s| a[s] == b[r]));
        }
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }
}
