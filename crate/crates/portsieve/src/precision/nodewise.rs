//! Nodewise regression: each precision-matrix row from one Lasso
//! regression of an asset on all the others.
//!
//! Row `j` is assembled from the penalized regression of `y_j` on
//! `Y_{-j}`: the diagonal is `1 / tau_j^2` and the off-diagonal block is
//! `-gamma_j' / tau_j^2`, where `tau_j^2` is the penalty-adjusted
//! residual variance. Penalties are chosen per regression by GIC.

use super::lasso::{default_lambda_grid, gic_select_on_problem, LassoProblem};
use super::{Diagnostics, EstimatorError, Method, PrecisionEstimate, TAU_FLOOR};
use crate::data::ReturnsMatrix;
use nalgebra::{DMatrix, DVector};

/// Nodewise estimate with GIC-selected penalties.
pub fn nodewise_precision(window: &ReturnsMatrix) -> Result<PrecisionEstimate, EstimatorError> {
    nodewise_precision_with_grid(window, None)
}

/// Nodewise estimate over an explicit penalty grid (one grid shared by all
/// regressions); `None` uses the automatic log-spaced grid per asset.
pub fn nodewise_precision_with_grid(
    window: &ReturnsMatrix,
    grid: Option<&[f64]>,
) -> Result<PrecisionEstimate, EstimatorError> {
    let (gamma, lambdas, taus) = nodewise_from_matrix(&window.values, grid, |j| {
        EstimatorError::DegenerateRegression {
            asset: window.assets[j].clone(),
            tau2: 0.0,
        }
    })?;
    let mut diagnostics = Diagnostics::default();
    diagnostics.series.insert("selected_lambda".into(), lambdas);
    diagnostics.series.insert("tau_squared".into(), taus);
    PrecisionEstimate::new(window.assets.clone(), gamma, Method::Nodewise, diagnostics)
}

/// Gamma matrix plus the per-asset selected penalties and residual
/// variances.
pub(crate) type NodewiseParts = (DMatrix<f64>, Vec<f64>, Vec<f64>);

/// Core nodewise driver over a raw n x p matrix. Columns are demeaned
/// here; the p regressions share one full Gram matrix.
pub(crate) fn nodewise_from_matrix(
    values: &DMatrix<f64>,
    grid: Option<&[f64]>,
    degenerate: impl Fn(usize) -> EstimatorError,
) -> Result<NodewiseParts, EstimatorError> {
    let n = values.nrows();
    let p = values.ncols();
    if p < 2 {
        return Err(EstimatorError::TooFewAssets {
            context: "nodewise",
            required: 2,
            actual: p,
        });
    }
    if n < 2 {
        return Err(EstimatorError::TooFewObservations {
            context: "nodewise",
            required: 2,
            actual: n,
        });
    }
    let mut y = values.clone();
    for j in 0..p {
        let mean = y.column(j).sum() / n as f64;
        for t in 0..n {
            y[(t, j)] -= mean;
        }
    }
    let full_gram = y.transpose() * &y / n as f64;

    let mut gamma = DMatrix::zeros(p, p);
    let mut lambdas = Vec::with_capacity(p);
    let mut taus = Vec::with_capacity(p);
    for j in 0..p {
        let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let mut gram = DMatrix::zeros(p - 1, p - 1);
        let mut xty = DVector::zeros(p - 1);
        for (a, &ka) in others.iter().enumerate() {
            xty[a] = full_gram[(ka, j)];
            for (b, &kb) in others.iter().enumerate() {
                gram[(a, b)] = full_gram[(ka, kb)];
            }
        }
        let problem = LassoProblem::from_gram(gram, xty, full_gram[(j, j)]);
        let auto_grid;
        let grid_ref: &[f64] = match grid {
            Some(g) => g,
            None => {
                auto_grid = default_lambda_grid(problem.lambda_max());
                &auto_grid
            }
        };
        let (lambda, coef) = gic_select_on_problem(&problem, n, grid_ref)?;
        let sigma2 = problem.sigma2(&coef).max(0.0);
        let tau2 = sigma2 + lambda * coef.iter().map(|c| c.abs()).sum::<f64>();
        if tau2 <= TAU_FLOOR {
            return Err(match degenerate(j) {
                EstimatorError::DegenerateRegression { asset, .. } => {
                    EstimatorError::DegenerateRegression { asset, tau2 }
                }
                other => other,
            });
        }
        gamma[(j, j)] = 1.0 / tau2;
        for (a, &k) in others.iter().enumerate() {
            gamma[(j, k)] = -coef[a] / tau2;
        }
        lambdas.push(lambda);
        taus.push(tau2);
    }
    Ok((gamma, lambdas, taus))
}
