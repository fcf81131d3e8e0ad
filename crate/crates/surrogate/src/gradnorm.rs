//! Adaptive task weighting by gradient normalization.
//!
//! Each task `i` has a weight `theta_i`. With `g_i = ||grad_W L_i||` over the
//! shared weights `W`, the weighted norms `G_i = theta_i g_i` are pulled
//! towards `mean(G) r_i^alpha`, where `r_i` is the task's loss ratio
//! `L_i / L_i(0)` relative to the mean ratio. The target is held fixed while
//! differentiating the L1 mismatch, so `dL/dtheta_i = sign(G_i - T_i) g_i`.

use serde::{Deserialize, Serialize};

use crate::optim::sgd_step;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskWeights {
    pub theta: Vec<f64>,
    /// Sum the weights are renormalized to.
    pub tau: f64,
    /// Losses of the first step, once recorded.
    pub initial_losses: Option<Vec<f64>>,
}

impl TaskWeights {
    /// `tasks` weights of 1 summing to `tau = tasks`.
    pub fn new(tasks: usize) -> Self {
        Self {
            theta: vec![1.0; tasks],
            tau: tasks as f64,
            initial_losses: None,
        }
    }

    /// Raises every weight to at least `floor` and rescales to sum to `tau`.
    pub fn renormalize(&mut self, floor: f64) {
        for t in &mut self.theta {
            if t.is_nan() || *t < floor {
                *t = floor;
            }
        }
        let sum: f64 = self.theta.iter().sum();
        let k = self.tau / sum;
        for t in &mut self.theta {
            *t *= k;
        }
    }
}

/// Quantities of one balancing step.
#[derive(Debug, Clone, PartialEq)]
pub struct GradNormStep {
    /// `g_i`, unweighted.
    pub grad_norms: Vec<f64>,
    /// `G_i = theta_i g_i`.
    pub weighted_norms: Vec<f64>,
    pub mean_norm: f64,
    /// `L_i / L_i(0)`, pinned to 1 when `L_i(0) = 0`.
    pub loss_ratios: Vec<f64>,
    /// Relative inverse training rates `r_i`.
    pub rates: Vec<f64>,
    pub targets: Vec<f64>,
    /// `sum_i |G_i - T_i|`.
    pub loss: f64,
    /// `dL/dtheta_i` with the targets frozen.
    pub gradient: Vec<f64>,
}

/// `sum_i |theta_i g_i - T_i|`.
pub fn gradnorm_loss(theta: &[f64], grad_norms: &[f64], targets: &[f64]) -> f64 {
    theta
        .iter()
        .zip(grad_norms)
        .zip(targets)
        .map(|((t, g), target)| (t * g - target).abs())
        .sum()
}

/// Evaluates the balancing loss and its gradient for the current weights.
/// `initial` are the first-step losses.
pub fn gradnorm_step(theta: &[f64], initial: &[f64], losses: &[f64], grad_norms: &[f64], alpha: f64) -> GradNormStep {
    let n = theta.len() as f64;
    let weighted: Vec<f64> = theta.iter().zip(grad_norms).map(|(t, g)| t * g).collect();
    let mean_norm = weighted.iter().sum::<f64>() / n;
    let loss_ratios: Vec<f64> = losses
        .iter()
        .zip(initial)
        .map(|(l, l0)| if *l0 == 0.0 { 1.0 } else { l / l0 })
        .collect();
    let mean_ratio = loss_ratios.iter().sum::<f64>() / n;
    let rates: Vec<f64> = loss_ratios
        .iter()
        .map(|r| if mean_ratio > 0.0 { r / mean_ratio } else { 1.0 })
        .collect();
    let targets: Vec<f64> = rates.iter().map(|r| mean_norm * r.powf(alpha)).collect();
    let gradient = weighted
        .iter()
        .zip(&targets)
        .zip(grad_norms)
        .map(|((w, t), g)| {
            let d = w - t;
            // a mismatch at rounding level is the balanced point, not a sign
            if d.abs() <= 8.0 * f64::EPSILON * w.abs().max(t.abs()) {
                0.0
            } else if d > 0.0 {
                *g
            } else if d < 0.0 {
                -g
            } else {
                0.0
            }
        })
        .collect();
    GradNormStep {
        loss: gradnorm_loss(theta, grad_norms, &targets),
        grad_norms: grad_norms.to_vec(),
        weighted_norms: weighted,
        mean_norm,
        loss_ratios,
        rates,
        targets,
        gradient,
    }
}

/// Records `L_i(0)` on first use, takes one SGD step on the weights and
/// renormalizes them.
pub fn gradnorm_update(
    weights: &mut TaskWeights,
    losses: &[f64],
    grad_norms: &[f64],
    alpha: f64,
    learning_rate: f64,
    floor: f64,
) -> GradNormStep {
    let initial = weights.initial_losses.get_or_insert_with(|| losses.to_vec()).clone();
    let step = gradnorm_step(&weights.theta, &initial, losses, grad_norms, alpha);
    sgd_step(&mut weights.theta, &step.gradient, learning_rate);
    weights.renormalize(floor);
    step
}
