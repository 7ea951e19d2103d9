use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are created on the first step and
/// bound positionally to the parameter list passed to [`Adam::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    steps: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            steps: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Updates every tensor from its gradient buffer; a tensor without a
    /// buffer is treated as having zero gradient.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<(), TrainError> {
        if self.steps == 0 {
            self.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.v = self.m.clone();
        }
        if params.len() != self.m.len() {
            return Err(TrainError::Optimizer(format!(
                "{} parameters, optimizer state holds {}",
                params.len(),
                self.m.len()
            )));
        }
        for (i, (p, m)) in params.iter().zip(&self.m).enumerate() {
            if p.numel() != m.len() {
                return Err(TrainError::Optimizer(format!(
                    "parameter {i} has {} values, moments have {}",
                    p.numel(),
                    m.len()
                )));
            }
        }

        self.steps += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.steps as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let (data, grad) = p.data_and_grad_mut();
            let Some(grad) = grad else { continue };
            for (((x, g), m), v) in data.iter_mut().zip(grad.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
