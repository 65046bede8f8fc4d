//! First-order optimizers for the parameter updates.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptMethod {
    PlainGradient,
    /// Root-mean-square gradient scaling:
    /// `s <- γ s + (1-γ) g²`, `θ <- θ - η g / (√s + ε)`.
    AdaptiveRms,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub method: OptMethod,
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: OptMethod::AdaptiveRms,
            learning_rate: 0.002,
            decay: 0.99,
            epsilon: 1e-8,
            batch_size: 128,
            epochs: 2500,
        }
    }
}

/// Per-parameter accumulator state.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    accum: DVector<f64>,
}

impl OptimizerState {
    pub fn new(dim: usize) -> Self {
        Self {
            accum: DVector::zeros(dim),
        }
    }

    pub fn step(&mut self, cfg: &OptimizerConfig, params: &mut DVector<f64>, grad: &DVector<f64>) {
        match cfg.method {
            OptMethod::PlainGradient => {
                *params -= cfg.learning_rate * grad;
            }
            OptMethod::AdaptiveRms => {
                for i in 0..params.len() {
                    self.accum[i] =
                        cfg.decay * self.accum[i] + (1.0 - cfg.decay) * grad[i] * grad[i];
                    params[i] -= cfg.learning_rate * grad[i] / (self.accum[i].sqrt() + cfg.epsilon);
                }
            }
        }
    }
}
