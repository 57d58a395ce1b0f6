//! Principal orthogonal complement thresholding.
//!
//! Factors come out of PCA on the return Gram matrix, the factor count
//! from the Bai-Ng information criterion, the residual covariance is
//! hard-thresholded entry by entry (diagonal untouched), and the return
//! precision is rebuilt through the Woodbury identity with an identity
//! factor covariance (the PCA normalization `F'F / n = I_K`).

use super::{
    sorted_symmetric_eigen, spd_inverse, Diagnostics, EstimatorError, Method, PrecisionEstimate,
};
use crate::data::ReturnsMatrix;
use nalgebra::DMatrix;

/// Thresholded residual covariance together with what thresholding did.
struct ThresholdedCovariance {
    matrix: DMatrix<f64>,
    zeroed: usize,
    off_diagonal: usize,
}

/// Bai-Ng factor count over `k = 1..=k1` for a p x n return matrix.
/// Returns the argmin and whether any residual hit the machine-epsilon
/// floor inside the log.
pub fn bai_ng_factor_count(
    y: &DMatrix<f64>,
    k1: usize,
) -> Result<(usize, bool), EstimatorError> {
    let p = y.nrows();
    let n = y.ncols();
    let min_pn = p.min(n);
    if k1 < 1 || k1 >= min_pn {
        return Err(EstimatorError::BadFactorBound { k1, min_pn });
    }
    // ||Y - (1/n) Y F_k F_k'||_F^2 = trace(Y'Y) - sum of top-k eigenvalues
    // of Y'Y, because F_k / sqrt(n) stacks orthonormal eigenvectors.
    let gram = y.transpose() * y;
    let (eigenvalues, _) = sorted_symmetric_eigen(&gram);
    let total: f64 = eigenvalues.iter().sum();
    let penalty = ((p + n) as f64 / (p * n) as f64) * (min_pn as f64).ln();

    let mut best_k = 1usize;
    let mut best_value = f64::INFINITY;
    let mut flagged = false;
    let mut explained = 0.0;
    for k in 1..=k1 {
        explained += eigenvalues[eigenvalues.len() - k].max(0.0);
        let mut residual = (total - explained) / (p * n) as f64;
        if residual < f64::EPSILON {
            residual = f64::EPSILON;
            flagged = true;
        }
        let value = residual.ln() + k as f64 * penalty;
        if value < best_value {
            best_value = value;
            best_k = k;
        }
    }
    Ok((best_k, flagged))
}

/// Woodbury recombination for a factor structure with identity factor
/// covariance: `Su - Su B (I_K + B' Su B)^{-1} B' Su`, `Su` the inverse of
/// the thresholded residual covariance. Returns the estimate and the
/// diagonal loading applied, if any.
pub fn poet_reconstruct(
    sigma_u_th: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    diagonal_loading: bool,
) -> Result<(DMatrix<f64>, Option<f64>), EstimatorError> {
    let (su, loading) = invert_thresholded(sigma_u_th, diagonal_loading)?;
    let k = loadings.ncols();
    let su_b = &su * loadings;
    let bracket = DMatrix::identity(k, k) + loadings.transpose() * &su_b;
    let bracket_inv = super::lu_inverse(&bracket, "poet woodbury bracket")?;
    let gamma = &su - &su_b * bracket_inv * su_b.transpose();
    Ok((gamma, loading))
}

pub(crate) fn invert_thresholded(
    sigma_u_th: &DMatrix<f64>,
    diagonal_loading: bool,
) -> Result<(DMatrix<f64>, Option<f64>), EstimatorError> {
    match spd_inverse(sigma_u_th, "thresholded residual covariance") {
        Ok(inv) => Ok((inv, None)),
        Err(err) if diagonal_loading => {
            let p = sigma_u_th.nrows() as f64;
            let epsilon = 1e-8 * sigma_u_th.trace() / p;
            let loaded = sigma_u_th + DMatrix::identity(sigma_u_th.nrows(), sigma_u_th.ncols()) * epsilon;
            match spd_inverse(&loaded, "thresholded residual covariance (loaded)") {
                Ok(inv) => Ok((inv, Some(epsilon))),
                Err(_) => Err(err),
            }
        }
        Err(err) => Err(err),
    }
}

/// Hard-threshold a residual covariance: off-diagonal entries whose
/// magnitude falls below the entrywise threshold are zeroed, the diagonal
/// is never touched.
fn threshold_residual_covariance(
    residuals: &DMatrix<f64>,
    threshold: impl Fn(usize, usize, f64) -> f64,
) -> ThresholdedCovariance {
    let p = residuals.nrows();
    let n = residuals.ncols() as f64;
    let sigma = residuals * residuals.transpose() / n;
    let mut out = sigma.clone();
    let mut zeroed = 0usize;
    let mut off_diagonal = 0usize;
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            off_diagonal += 1;
            let tau = threshold(i, j, sigma[(i, j)]);
            if sigma[(i, j)].abs() < tau {
                out[(i, j)] = 0.0;
                zeroed += 1;
            }
        }
    }
    ThresholdedCovariance {
        matrix: out,
        zeroed,
        off_diagonal,
    }
}

/// POET estimate. `factor_count` fixes K; otherwise Bai-Ng picks it with
/// upper bound `max_factors`.
pub fn poet_precision(
    window: &ReturnsMatrix,
    factor_count: Option<usize>,
    max_factors: usize,
    diagonal_loading: bool,
) -> Result<PrecisionEstimate, EstimatorError> {
    let p = window.n_assets();
    let n = window.n_obs();
    if p < 2 {
        return Err(EstimatorError::TooFewAssets {
            context: "poet",
            required: 2,
            actual: p,
        });
    }
    if n < 2 {
        return Err(EstimatorError::TooFewObservations {
            context: "poet",
            required: 2,
            actual: n,
        });
    }
    if factor_count == Some(0) {
        return Err(EstimatorError::ZeroFactors);
    }

    // Y: p x n.
    let y = window.values.transpose();
    let mut flagged = false;
    let k_hat = match factor_count {
        Some(k) => k.min(p.min(n) - 1).max(1),
        None => {
            // PCA residuals have rank exactly p - K, so the searched
            // factor count must stay well below p for the thresholded
            // residual covariance to have any chance of invertibility.
            let structural = (p / 3).max(1);
            let bound = max_factors.clamp(1, p.min(n) - 1).min(structural);
            let (k, f) = bai_ng_factor_count(&y, bound)?;
            flagged = f;
            k
        }
    };

    // F / sqrt(n) = top-K eigenvectors of Y'Y, B = Y F / n.
    let gram = y.transpose() * &y;
    let (eigenvalues, eigenvectors) = sorted_symmetric_eigen(&gram);
    let total_cols = eigenvalues.len();
    let mut f_hat = DMatrix::zeros(n, k_hat);
    for k in 0..k_hat {
        let col = eigenvectors.column(total_cols - 1 - k) * (n as f64).sqrt();
        f_hat.set_column(k, &col);
    }
    let loadings = &y * &f_hat / n as f64;
    let residuals = &y - &loadings * f_hat.transpose();

    // Entrywise thresholds: (1/2)(1/sqrt(p) + sqrt(log p / n)) * sd of the
    // products u_it u_jt around sigma_ij.
    let rate = 0.5 * (1.0 / (p as f64).sqrt() + ((p as f64).ln() / n as f64).sqrt());
    let thresholded = threshold_residual_covariance(&residuals, |i, j, sigma_ij| {
        let mut spread = 0.0;
        for t in 0..n {
            spread += (residuals[(i, t)] * residuals[(j, t)] - sigma_ij).powi(2);
        }
        rate * (spread / n as f64).sqrt()
    });

    let (gamma, loading) = poet_reconstruct(&thresholded.matrix, &loadings, diagonal_loading)?;
    let mut diagnostics = Diagnostics::default();
    diagnostics.scalars.insert("k_hat".into(), k_hat as f64);
    diagnostics
        .scalars
        .insert("thresholded_zeroed".into(), thresholded.zeroed as f64);
    diagnostics
        .scalars
        .insert("off_diagonal_entries".into(), thresholded.off_diagonal as f64);
    if flagged {
        diagnostics.scalars.insert("bai_ng_epsilon_floor".into(), 1.0);
    }
    if let Some(eps) = loading {
        diagnostics.scalars.insert("diagonal_loading".into(), eps);
    }
    PrecisionEstimate::new(window.assets.clone(), gamma, Method::Poet, diagnostics)
}
