//! Scalar building blocks for objectives, each paired with its derivative.

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Epsilon inside `log(1 - tanh(u)^2 + eps)`.
pub const TANH_EPS: f64 = 1e-6;

/// `mean_i ½‖prediction_i − target_i‖²` over rows, with its gradient.
pub fn half_squared_error(prediction: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if prediction.rows() != target.rows() || prediction.cols() != target.cols() {
        return Err(Error::shape("prediction and target shapes differ"));
    }
    let n = prediction.rows().max(1) as f64;
    let mut grad = Matrix::zeros(prediction.rows(), prediction.cols());
    let mut value = 0.0;
    for ((g, p), t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(prediction.as_slice())
        .zip(target.as_slice())
    {
        let e = p - t;
        value += 0.5 * e * e;
        *g = e / n;
    }
    Ok((value / n, grad))
}

/// Smaller of two values and whether the first was selected (ties pick the first).
pub fn min2(a: f64, b: f64) -> (f64, bool) {
    if a <= b {
        (a, true)
    } else {
        (b, false)
    }
}

/// Diagonal Gaussian log-density `log N(u; mu, exp(log_std)²)`.
pub fn gaussian_log_density(u: &[f64], mu: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mu)
        .zip(log_std)
        .map(|((&u, &m), &ls)| {
            let z = (u - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

/// `Σ log(1 − tanh(u_i)² + eps)`: log-Jacobian of the tanh squashing.
pub fn tanh_log_jacobian(u: &[f64]) -> f64 {
    u.iter()
        .map(|&v| {
            let t = v.tanh();
            (1.0 - t * t + TANH_EPS).ln()
        })
        .sum()
}

/// Derivative of one term of [`tanh_log_jacobian`] with respect to `u`.
pub fn tanh_log_jacobian_derivative(u: f64) -> f64 {
    let t = u.tanh();
    let s = 1.0 - t * t;
    -2.0 * t * s / (s + TANH_EPS)
}
