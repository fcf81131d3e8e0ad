//! Adam for the network parameters and plain SGD for the task weights.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SurrogateError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(size: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: vec![0.0; size],
            second_moment: vec![0.0; size],
            step: 0,
        }
    }

    /// One bias-corrected Adam update of `params`. A non-finite gradient
    /// leaves everything untouched and is reported.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grad.len() != params.len() {
            return Err(SurrogateError::WidthMismatch {
                what: "optimizer buffers",
                expected: self.first_moment.len(),
                got: grad.len(),
            });
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(SurrogateError::NonFiniteGradient(i));
        }
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        self.step += 1;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// `w <- w - lr * g`.
pub fn sgd_step(weights: &mut [f64], grad: &[f64], learning_rate: f64) {
    for (w, g) in weights.iter_mut().zip(grad) {
        *w -= learning_rate * g;
    }
}

/// Adam state of the network plus the step size of the task weights.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub adam: Adam,
    pub task_learning_rate: f64,
}
