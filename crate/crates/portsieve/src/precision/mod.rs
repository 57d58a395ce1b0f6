//! Precision-matrix estimation for screened return windows.
//!
//! Five estimators share one output contract, [`PrecisionEstimate`]:
//!
//! * `nw` — nodewise Lasso regressions, one per asset;
//! * `rnw` — nodewise on observable-factor residuals, recombined through
//!   the Sherman-Morrison-Woodbury identity;
//! * `poet` — principal-component factors with hard-thresholded residual
//!   covariance;
//! * `deep` — a feed-forward network on observable factors with
//!   thresholded residual covariance;
//! * `nls` — analytical nonlinear shrinkage of sample eigenvalues.
//!
//! Estimators consume the window exactly as provided. The pipeline
//! demeans columns before estimation; nodewise additionally demeans
//! internally because its regressions require centered inputs.

mod deep;
mod lasso;
mod nls;
mod nodewise;
mod poet;
mod residual;

pub use deep::{deep_factor_precision, deep_reconstruct, train_factor_network, DeepConfig};
pub use lasso::{default_lambda_grid, gic_select_lambda, lasso_coordinate_descent};
pub use nls::nls_precision;
pub use nodewise::{nodewise_precision, nodewise_precision_with_grid};
pub use poet::{bai_ng_factor_count, poet_precision, poet_reconstruct};
pub use residual::{load_factor_panel, residual_nodewise_precision, rnw_reconstruct, FactorPanel};

use crate::data::{AssetId, ReturnsMatrix};
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::fmt;

/// Relative tolerance for the symmetry invariant of factor-style estimates.
const SYMMETRY_TOLERANCE: f64 = 1e-8;
/// Degeneracy floor for nodewise residual variances.
pub(crate) const TAU_FLOOR: f64 = 1e-12;
/// Default Bai-Ng upper bound on the factor count.
pub const DEFAULT_MAX_FACTORS: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum EstimatorError {
    #[error("{context} needs at least {required} observations, got {actual}")]
    TooFewObservations {
        context: &'static str,
        required: usize,
        actual: usize,
    },
    #[error("{context} needs at least {required} assets, got {actual}")]
    TooFewAssets {
        context: &'static str,
        required: usize,
        actual: usize,
    },
    #[error("invalid lasso penalty {0}")]
    InvalidLambda(f64),
    #[error("lambda grid is empty")]
    EmptyLambdaGrid,
    #[error("every lambda in the grid produced a zero residual; GIC undefined")]
    AllLambdasDegenerate,
    #[error("lasso did not converge after {sweeps} sweeps (residual norm {residual_norm:.3e})")]
    LassoNonConvergence {
        sweeps: usize,
        last_coefficients: Vec<f64>,
        residual_norm: f64,
    },
    #[error("degenerate nodewise regression for asset {asset}: tau^2 = {tau2:.3e}")]
    DegenerateRegression { asset: AssetId, tau2: f64 },
    #[error("asset {asset} has (near-)zero sample variance")]
    ZeroVarianceAsset { asset: AssetId },
    #[error("{context} is singular or ill-conditioned (condition number {condition:.3e})")]
    SingularMatrix { context: &'static str, condition: f64 },
    #[error("{context} is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite {
        context: &'static str,
        min_eigenvalue: f64,
    },
    #[error("estimated gamma has a non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("estimated gamma is asymmetric (max |g - g'| = {max_abs:.3e})")]
    Asymmetric { max_abs: f64 },
    #[error("factor count must be at least 1")]
    ZeroFactors,
    #[error("factor count bound {k1} must satisfy 1 <= K1 < min(p, n) = {min_pn}")]
    BadFactorBound { k1: usize, min_pn: usize },
    #[error("factor panel dates do not match the return window")]
    FactorDatesMismatch,
    #[error("factor matrix is rank deficient")]
    FactorRankDeficient,
    #[error("method {0} requires an observable factor panel")]
    FactorsRequired(Method),
    #[error("network training diverged at epoch {epoch} (loss {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },
    #[error("nonlinear shrinkage needs n >= 12, got {0}")]
    NlsTooFewObservations(usize),
    #[error("sample eigenvalue {lambda:.3e} at index {index} is not positive with p <= n; sample covariance is singular")]
    NlsSingularSample { index: usize, lambda: f64 },
    #[error("sample covariance has no positive eigenvalue")]
    NlsNoPositiveEigenvalue,
    #[error("shrunk eigenvalues not positive at sample indices {0:?} (index, lambda, shrunk)")]
    NonPositiveShrunkEigenvalues(Vec<(usize, f64, f64)>),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// Which estimator produced a precision matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Method {
    Nodewise,
    ResidualNodewise,
    Poet,
    DeepFactor,
    Nls,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Nodewise,
        Method::ResidualNodewise,
        Method::DeepFactor,
        Method::Poet,
        Method::Nls,
    ];

    /// Short selector used in configs and on the command line.
    pub fn code(self) -> &'static str {
        match self {
            Method::Nodewise => "nw",
            Method::ResidualNodewise => "rnw",
            Method::Poet => "poet",
            Method::DeepFactor => "deep",
            Method::Nls => "nls",
        }
    }

    pub fn from_code(code: &str) -> Option<Method> {
        match code {
            "nw" => Some(Method::Nodewise),
            "rnw" => Some(Method::ResidualNodewise),
            "poet" => Some(Method::Poet),
            "deep" => Some(Method::DeepFactor),
            "nls" => Some(Method::Nls),
            _ => None,
        }
    }

    /// Report row label.
    pub fn label(self) -> &'static str {
        match self {
            Method::Nodewise => "NW",
            Method::ResidualNodewise => "Residual NW",
            Method::Poet => "POET",
            Method::DeepFactor => "Deep learning",
            Method::Nls => "NLS",
        }
    }

    pub fn needs_factors(self) -> bool {
        matches!(self, Method::ResidualNodewise | Method::DeepFactor)
    }

    /// Nodewise-family estimates may be asymmetric; the rest must be
    /// symmetric positive definite.
    fn requires_spd(self) -> bool {
        matches!(self, Method::Poet | Method::DeepFactor | Method::Nls)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Estimator metadata: shared conditioning numbers plus per-method extras
/// (selected penalties, factor counts, shrunk eigenvalues, ...).
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct Diagnostics {
    pub condition_number: f64,
    pub min_eigenvalue: f64,
    pub scalars: BTreeMap<String, f64>,
    pub series: BTreeMap<String, Vec<f64>>,
}

/// A p x p precision estimate with the asset ordering it refers to.
#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    pub assets: Vec<AssetId>,
    pub gamma: DMatrix<f64>,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

impl PrecisionEstimate {
    /// Validate the output contract: finite everywhere; symmetric positive
    /// definite for the factor-style estimators.
    pub fn new(
        assets: Vec<AssetId>,
        gamma: DMatrix<f64>,
        method: Method,
        mut diagnostics: Diagnostics,
    ) -> Result<PrecisionEstimate, EstimatorError> {
        assert_eq!(assets.len(), gamma.nrows());
        assert_eq!(gamma.nrows(), gamma.ncols());
        for row in 0..gamma.nrows() {
            for col in 0..gamma.ncols() {
                if !gamma[(row, col)].is_finite() {
                    return Err(EstimatorError::NonFiniteEntry { row, col });
                }
            }
        }
        let scale = gamma.amax().max(1.0);
        let asymmetry = max_asymmetry(&gamma);
        if method.requires_spd() && asymmetry > SYMMETRY_TOLERANCE * scale {
            return Err(EstimatorError::Asymmetric { max_abs: asymmetry });
        }
        let sym = symmetrize(&gamma);
        let eigenvalues = sym.symmetric_eigenvalues();
        let min_eigenvalue = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let max_abs = eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let min_abs = eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, &v| m.min(v.abs()));
        if method.requires_spd() && min_eigenvalue <= 0.0 {
            return Err(EstimatorError::NotPositiveDefinite {
                context: "estimated gamma",
                min_eigenvalue,
            });
        }
        diagnostics.condition_number = if min_abs > 0.0 {
            max_abs / min_abs
        } else {
            f64::INFINITY
        };
        diagnostics.min_eigenvalue = min_eigenvalue;
        Ok(PrecisionEstimate {
            assets,
            gamma,
            method,
            diagnostics,
        })
    }

    pub fn p(&self) -> usize {
        self.gamma.nrows()
    }

    /// `(gamma + gamma') / 2`, the form fed to weight formulas.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        symmetrize(&self.gamma)
    }
}

/// `(m + m') / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Options shared by the estimator dispatcher.
#[derive(Debug, Clone)]
pub struct EstimateOptions {
    /// Fixed factor count for POET; otherwise Bai-Ng selects it.
    pub factor_count: Option<usize>,
    /// Bai-Ng upper bound.
    pub max_factors: usize,
    /// Retry a failed positive-definiteness check with diagonal loading
    /// `1e-8 * trace / p` (POET and deep residual covariances).
    pub diagonal_loading: bool,
    pub deep: DeepConfig,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            factor_count: None,
            max_factors: DEFAULT_MAX_FACTORS,
            diagonal_loading: false,
            deep: DeepConfig::default(),
        }
    }
}

/// Dispatch on method. A single-asset universe short-circuits every method
/// to the 1x1 matrix `[1 / sample variance]`.
pub fn estimate_precision(
    method: Method,
    window: &ReturnsMatrix,
    factors: Option<&FactorPanel>,
    options: &EstimateOptions,
) -> Result<PrecisionEstimate, EstimatorError> {
    if window.n_assets() == 1 {
        return single_asset_estimate(method, window);
    }
    match method {
        Method::Nodewise => nodewise_precision(window),
        Method::ResidualNodewise => {
            let f = factors.ok_or(EstimatorError::FactorsRequired(method))?;
            residual_nodewise_precision(window, f)
        }
        Method::Poet => poet_precision(
            window,
            options.factor_count,
            options.max_factors,
            options.diagonal_loading,
        ),
        Method::DeepFactor => {
            let f = factors.ok_or(EstimatorError::FactorsRequired(method))?;
            deep_factor_precision(window, f, &options.deep, options.diagonal_loading)
        }
        Method::Nls => nls_precision(window),
    }
}

fn single_asset_estimate(
    method: Method,
    window: &ReturnsMatrix,
) -> Result<PrecisionEstimate, EstimatorError> {
    let col = window.values.column(0);
    let n = col.len() as f64;
    let mean = col.sum() / n;
    let variance = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if variance <= TAU_FLOOR {
        return Err(EstimatorError::ZeroVarianceAsset {
            asset: window.assets[0].clone(),
        });
    }
    PrecisionEstimate::new(
        window.assets.clone(),
        DMatrix::from_element(1, 1, 1.0 / variance),
        method,
        Diagnostics::default(),
    )
}

/// Invert a symmetric positive-definite matrix through its Cholesky
/// factor, with the context recorded on failure.
pub(crate) fn spd_inverse(
    m: &DMatrix<f64>,
    context: &'static str,
) -> Result<DMatrix<f64>, EstimatorError> {
    let sym = symmetrize(m);
    match sym.clone().cholesky() {
        Some(chol) => Ok(chol.inverse()),
        None => {
            let min_eigenvalue = sym
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            Err(EstimatorError::NotPositiveDefinite {
                context,
                min_eigenvalue,
            })
        }
    }
}

/// LU inverse for small general matrices, reporting an estimated
/// condition number on failure.
pub(crate) fn lu_inverse(
    m: &DMatrix<f64>,
    context: &'static str,
) -> Result<DMatrix<f64>, EstimatorError> {
    m.clone().try_inverse().ok_or_else(|| {
        let svd = m.clone().svd(false, false);
        let max = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
        let min = svd
            .singular_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        EstimatorError::SingularMatrix {
            context,
            condition: if min > 0.0 { max / min } else { f64::INFINITY },
        }
    })
}

/// Eigenvalues ascending with matching eigenvector columns.
pub(crate) fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(m.nrows(), m.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}
