//! Residual nodewise regression: observable factors removed by least
//! squares, nodewise on the residuals, and the return precision rebuilt
//! through the Sherman-Morrison-Woodbury identity.

use super::nodewise::nodewise_from_matrix;
use super::{lu_inverse, symmetrize, Diagnostics, EstimatorError, Method, PrecisionEstimate};
use crate::data::{self, ReturnsMatrix};
use crate::dates::Month;
use nalgebra::{DMatrix, DVector};
use std::path::Path;

/// Observable factor realizations aligned with a return window, one row
/// per month.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    pub dates: Vec<Month>,
    /// n x K.
    pub values: DMatrix<f64>,
}

impl FactorPanel {
    pub fn n_factors(&self) -> usize {
        self.values.ncols()
    }

    /// Restrict to the given dates (all must be present).
    pub fn select_dates(&self, dates: &[Month]) -> Result<FactorPanel, EstimatorError> {
        let mut rows = Vec::with_capacity(dates.len());
        for d in dates {
            match self.dates.iter().position(|x| x == d) {
                Some(i) => rows.push(i),
                None => return Err(EstimatorError::FactorDatesMismatch),
            }
        }
        let mut values = DMatrix::zeros(rows.len(), self.n_factors());
        for (t, &i) in rows.iter().enumerate() {
            values.set_row(t, &self.values.row(i));
        }
        Ok(FactorPanel {
            dates: dates.to_vec(),
            values,
        })
    }
}

/// Load a factor file with header `date,f1,...,fK` and `YYYY-MM` dates.
pub fn load_factor_panel(path: impl AsRef<Path>) -> Result<FactorPanel, data::DataError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| data::DataError::Io {
        path: display.clone(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| data::DataError::Parse {
        path: display.clone(),
        line: 1,
        message: "empty factor file".to_string(),
    })?;
    let cols: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
    if cols.len() < 2 || cols[0] != "date" {
        return Err(data::DataError::Parse {
            path: display,
            line: 1,
            message: format!("expected header `date,f1,...,fK`, found `{header}`"),
        });
    }
    let k = cols.len() - 1;
    let mut dates = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields = data::split_fields(raw, k + 1, &display, line)?;
        let date: Month = fields[0].parse().map_err(|e: crate::dates::MonthParseError| {
            data::DataError::Parse {
                path: display.clone(),
                line,
                message: e.to_string(),
            }
        })?;
        dates.push(date);
        for f in &fields[1..] {
            rows.push(data::parse_float(f, "factor", &display, line)?);
        }
    }
    let n = dates.len();
    Ok(FactorPanel {
        dates,
        values: DMatrix::from_row_slice(n, k, &rows),
    })
}

/// The Sherman-Morrison-Woodbury recombination
/// `omega - omega B [sigma_f^{-1} + B' omega_sym B]^{-1} B' omega`,
/// with `omega_sym = (omega + omega') / 2`.
pub fn rnw_reconstruct(
    omega: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    sigma_f: &DMatrix<f64>,
) -> Result<DMatrix<f64>, EstimatorError> {
    let sigma_f_inv = lu_inverse(sigma_f, "factor covariance")?;
    let omega_sym = symmetrize(omega);
    let bracket = sigma_f_inv + loadings.transpose() * omega_sym * loadings;
    let bracket_inv = lu_inverse(&bracket, "woodbury bracket")?;
    // omega may be asymmetric, so the two wings differ.
    let left = omega * loadings;
    let right = loadings.transpose() * omega;
    Ok(omega - &left * bracket_inv * right)
}

/// Residual nodewise estimate from a return window and matching factors.
pub fn residual_nodewise_precision(
    window: &ReturnsMatrix,
    factors: &FactorPanel,
) -> Result<PrecisionEstimate, EstimatorError> {
    let aligned = if factors.dates == window.dates {
        factors.clone()
    } else {
        factors.select_dates(&window.dates)?
    };
    let n = window.n_obs();
    let p = window.n_assets();
    let k = aligned.n_factors();
    if n <= k {
        return Err(EstimatorError::TooFewObservations {
            context: "residual nodewise",
            required: k + 1,
            actual: n,
        });
    }
    if p < 2 {
        return Err(EstimatorError::TooFewAssets {
            context: "residual nodewise",
            required: 2,
            actual: p,
        });
    }

    // X: K x n factor matrix, Y: p x n returns.
    let x = aligned.values.transpose();
    let y = window.values.transpose();
    let xxt = &x * x.transpose();
    let xxt_inv = match lu_inverse(&xxt, "factor gram") {
        Ok(inv) => inv,
        Err(_) => return Err(EstimatorError::FactorRankDeficient),
    };
    // B = (Y X')(X X')^{-1}, per-asset least squares without intercept.
    let loadings = (&y * x.transpose()) * &xxt_inv;
    let residuals = &y - &loadings * &x;

    // Nodewise on residuals (n x p orientation).
    let (omega, lambdas, taus) =
        nodewise_from_matrix(&residuals.transpose(), None, |j| {
            EstimatorError::DegenerateRegression {
                asset: window.assets[j].clone(),
                tau2: 0.0,
            }
        })?;

    // Factor covariance with the mean term spelled out: XX'/n - X 1 1' X'/n^2.
    let ones = DVector::from_element(n, 1.0);
    let x_ones = &x * &ones;
    let sigma_f = &xxt / n as f64 - (&x_ones * x_ones.transpose()) / (n as f64 * n as f64);

    let gamma = rnw_reconstruct(&omega, &loadings, &sigma_f)?;
    let mut diagnostics = Diagnostics::default();
    diagnostics.scalars.insert("n_factors".into(), k as f64);
    diagnostics.series.insert("selected_lambda".into(), lambdas);
    diagnostics.series.insert("tau_squared".into(), taus);
    PrecisionEstimate::new(
        window.assets.clone(),
        gamma,
        Method::ResidualNodewise,
        diagnostics,
    )
}
