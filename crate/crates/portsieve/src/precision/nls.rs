//! Analytical nonlinear shrinkage of sample eigenvalues.
//!
//! The sample covariance `S = Y'Y / n` keeps its eigenvectors; each
//! eigenvalue is replaced by a closed-form optimal value built from an
//! Epanechnikov kernel estimate of the spectral density and its Hilbert
//! transform, with adaptive bandwidths `h_{n,k} = n^{-1/3} lambda_k`. Three
//! regimes: all eigenvalues when `p <= n`; the `n` nonzero eigenvalues and
//! the zero stack separately when `p > n`.

use super::{Diagnostics, EstimatorError, Method, PrecisionEstimate};
use crate::data::ReturnsMatrix;
use nalgebra::DMatrix;
use std::f64::consts::PI;

const SQRT5: f64 = 2.236_067_977_499_79;

/// One summand of the kernel Hilbert-transform estimate at distance
/// `lambda_j - lambda_k` with bandwidth `h`.
fn hilbert_summand(lambda_j: f64, lambda_k: f64, h: f64) -> f64 {
    let d = lambda_j - lambda_k;
    let first = -3.0 * d / (10.0 * PI * h * h);
    let bracket = 1.0 - (d / h).powi(2) / 5.0;
    let num = SQRT5 * h - d;
    let den = SQRT5 * h + d;
    // bracket -> 0 linearly exactly where the log blows up; the product's
    // limit is zero.
    let log_part = if num == 0.0 || den == 0.0 {
        0.0
    } else {
        bracket * (num / den).abs().ln()
    };
    first + 3.0 / (4.0 * SQRT5 * PI * h) * log_part
}

/// One summand of the Epanechnikov density estimate.
fn kernel_summand(lambda_j: f64, lambda_k: f64, h: f64) -> f64 {
    let bracket = 1.0 - (lambda_j - lambda_k).powi(2) / (5.0 * h * h);
    if bracket > 0.0 {
        3.0 / (4.0 * SQRT5 * h) * bracket
    } else {
        0.0
    }
}

/// Shrunk eigenvalues for an ascending sample spectrum. `p` and `n` fix
/// the concentration ratio and the summation regime.
fn shrink_eigenvalues(
    lambdas: &[f64],
    p: usize,
    n: usize,
) -> Result<Vec<f64>, EstimatorError> {
    let c_hat = p as f64 / n as f64;
    let h_global = (n as f64).powf(-1.0 / 3.0);

    // For p > n the smallest p - n eigenvalues are the zero stack and the
    // kernel sums run over the n largest; otherwise every eigenvalue
    // participates and must be positive.
    let zero_count = p.saturating_sub(n);
    let support = &lambdas[zero_count..];
    if p <= n {
        // Numerical rank deficiency shows up as eigenvalues at rounding
        // level; the adaptive bandwidths collapse there.
        let floor = lambdas.last().copied().unwrap_or(0.0).max(0.0) * 1e-12;
        for (index, &lambda) in lambdas.iter().enumerate() {
            if lambda <= floor {
                return Err(EstimatorError::NlsSingularSample { index, lambda });
            }
        }
    } else {
        if !support.iter().any(|&l| l > 0.0) {
            return Err(EstimatorError::NlsNoPositiveEigenvalue);
        }
        if let Some((index, &lambda)) = support.iter().enumerate().find(|(_, &l)| l <= 0.0) {
            return Err(EstimatorError::NlsSingularSample {
                index: zero_count + index,
                lambda,
            });
        }
    }
    let bandwidths: Vec<f64> = support.iter().map(|&l| h_global * l).collect();

    // Shared zero-stack value when p > n.
    let phi_zero = if zero_count > 0 {
        let log_arg = (1.0 + SQRT5 * h_global) / (1.0 - SQRT5 * h_global);
        let front = 3.0 / (10.0 * h_global * h_global)
            + 3.0 / (4.0 * SQRT5 * h_global) * (1.0 - 1.0 / (5.0 * h_global * h_global))
                * log_arg.ln();
        let inv_sum: f64 = support.iter().map(|&l| 1.0 / l).sum();
        let hilbert_zero = front * inv_sum / (PI * n as f64);
        Some(1.0 / (PI * (c_hat - 1.0) * hilbert_zero))
    } else {
        None
    };

    let mut shrunk = Vec::with_capacity(p);
    let mut offenders = Vec::new();
    for (index, &lambda) in lambdas.iter().enumerate() {
        let phi = if index < zero_count {
            phi_zero.expect("zero stack implies p > n")
        } else {
            let (hilbert_scale, density_scale) = if p > n {
                (1.0 / n as f64, 1.0 / p as f64)
            } else {
                (1.0 / p as f64, 1.0 / p as f64)
            };
            let mut hilbert = 0.0;
            let mut density = 0.0;
            for (k, &lambda_k) in support.iter().enumerate() {
                hilbert += hilbert_summand(lambda, lambda_k, bandwidths[k]);
                density += kernel_summand(lambda, lambda_k, bandwidths[k]);
            }
            hilbert *= hilbert_scale;
            density *= density_scale;
            // The density enters as pi*c*lambda*f(lambda): both brackets
            // are dimensionless, which keeps the estimator equivariant
            // under data rescaling.
            let denom = (PI * c_hat * lambda * density).powi(2)
                + (1.0 - c_hat - PI * c_hat * lambda * hilbert).powi(2);
            lambda / denom
        };
        if phi.is_nan() || phi <= 0.0 || !phi.is_finite() {
            offenders.push((index, lambda, phi));
        }
        shrunk.push(phi);
    }
    if !offenders.is_empty() {
        return Err(EstimatorError::NonPositiveShrunkEigenvalues(offenders));
    }
    Ok(shrunk)
}

/// Nonlinear-shrinkage estimate: `S = Y'Y/n = U L U'` becomes
/// `Sigma = U L* U'` with shrunk eigenvalues, and the precision is its
/// exact eigen-inverse `U (L*)^{-1} U'`.
pub fn nls_precision(window: &ReturnsMatrix) -> Result<PrecisionEstimate, EstimatorError> {
    let n = window.n_obs();
    let p = window.n_assets();
    if n < 12 {
        return Err(EstimatorError::NlsTooFewObservations(n));
    }
    if p < 2 {
        return Err(EstimatorError::TooFewAssets {
            context: "nonlinear shrinkage",
            required: 2,
            actual: p,
        });
    }
    let sample = window.values.transpose() * &window.values / n as f64;
    let (lambdas, vectors) = super::sorted_symmetric_eigen(&sample);
    let shrunk = shrink_eigenvalues(&lambdas, p, n)?;

    let mut gamma = DMatrix::zeros(p, p);
    for (k, &phi) in shrunk.iter().enumerate() {
        let u = vectors.column(k);
        let w = 1.0 / phi;
        for i in 0..p {
            for j in 0..p {
                gamma[(i, j)] += w * u[i] * u[j];
            }
        }
    }

    let mut diagnostics = Diagnostics::default();
    diagnostics
        .scalars
        .insert("concentration".into(), p as f64 / n as f64);
    diagnostics.series.insert("sample_eigenvalues".into(), lambdas);
    diagnostics.series.insert("shrunk_eigenvalues".into(), shrunk);
    PrecisionEstimate::new(window.assets.clone(), gamma, Method::Nls, diagnostics)
}
