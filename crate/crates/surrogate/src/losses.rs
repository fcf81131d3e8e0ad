//! Task losses and their gradients with respect to network outputs.

use ndarray::{Array2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::network::Mlp;

/// Mean over rows of the squared output error summed over components.
/// Returns the loss and its gradient with respect to `outputs`.
pub fn displacement_loss(outputs: &Array2<f64>, targets: &Array2<f64>) -> (f64, Array2<f64>) {
    let rows = outputs.nrows() as f64;
    let diff = outputs - targets;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / rows;
    (loss, diff * (2.0 / rows))
}

/// Gaussian draw normalized to unit length, uniform on the sphere `S^(d-1)`.
pub fn sample_unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    assert!(d >= 1, "sphere dimension must be positive");
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `(1/M) sum v v^T` over the draws.
pub fn projection_covariance(draws: &[Vec<f64>]) -> Array2<f64> {
    let d = draws[0].len();
    let mut c = Array2::zeros((d, d));
    for v in draws {
        for a in 0..d {
            for b in 0..d {
                c[(a, b)] += v[a] * v[b];
            }
        }
    }
    c / draws.len() as f64
}

/// Sobolev cost for first derivatives: mean over rows and draws of
/// `sum_o <grad m_o - grad f_o, v>^2`, written through the draw covariance
/// `C` as `sum_o dᵀ C d`.
///
/// `tangents[k]` and `targets[k]` hold `d/dx_k` of every output (rows x
/// outputs). Returns the loss and the gradient with respect to `tangents`.
pub fn sobolev_loss(
    tangents: &[Array2<f64>],
    targets: &[Array2<f64>],
    covariance: &Array2<f64>,
) -> (f64, Vec<Array2<f64>>) {
    let d = tangents.len();
    let rows = tangents[0].nrows() as f64;
    let diffs: Vec<Array2<f64>> = tangents.iter().zip(targets).map(|(t, f)| t - f).collect();
    let mut grads: Vec<Array2<f64>> = diffs.iter().map(|x| Array2::zeros(x.raw_dim())).collect();
    let mut loss = 0.0;
    for a in 0..d {
        for b in 0..d {
            let c = covariance[(a, b)];
            if c == 0.0 {
                continue;
            }
            loss += c * Zip::from(&diffs[a]).and(&diffs[b]).fold(0.0, |acc, x, y| acc + x * y);
            grads[a].scaled_add(2.0 * c / rows, &diffs[b]);
        }
    }
    (loss / rows, grads)
}

/// Sobolev cost for an explicit list of projection directions.
pub fn sobolev_loss_draws(
    tangents: &[Array2<f64>],
    targets: &[Array2<f64>],
    draws: &[Vec<f64>],
) -> (f64, Vec<Array2<f64>>) {
    sobolev_loss(tangents, targets, &projection_covariance(draws))
}

/// Homogeneity residual `rho y_c + (rho - 1) mu/sigma - y` per row, where
/// `y_c` is the normalized output at the scaled modulus. Returns the mean
/// squared residual and the gradients with respect to `y_c` and `y`.
pub fn homogeneity_penalty(
    scaled: &Array2<f64>,
    plain: &Array2<f64>,
    rho: &[f64],
    offset: &[f64],
) -> (f64, Array2<f64>, Array2<f64>) {
    let rows = plain.nrows() as f64;
    let mut residual = Array2::zeros(plain.raw_dim());
    for (r, mut row) in residual.rows_mut().into_iter().enumerate() {
        for (o, v) in row.iter_mut().enumerate() {
            *v = rho[r] * scaled[(r, o)] + (rho[r] - 1.0) * offset[o] - plain[(r, o)];
        }
    }
    let loss = residual.iter().map(|v| v * v).sum::<f64>() / rows;
    let mut g_scaled = residual.clone() * (2.0 / rows);
    for (r, mut row) in g_scaled.rows_mut().into_iter().enumerate() {
        row *= rho[r];
    }
    let g_plain = residual * (-2.0 / rows);
    (loss, g_scaled, g_plain)
}

/// Sum of squared weights of `mlp` (biases excluded) and its gradient as a
/// network-shaped value.
pub fn weight_decay(mlp: &Mlp) -> (f64, Mlp) {
    let mut grad = mlp.zeros_like();
    let mut value = 0.0;
    for (l, g) in mlp.layers.iter().zip(&mut grad.layers) {
        value += l.weights.iter().map(|w| w * w).sum::<f64>();
        g.weights = &l.weights * 2.0;
    }
    (value, grad)
}
