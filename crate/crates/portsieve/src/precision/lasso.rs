//! Lasso solved by cyclic coordinate descent, and the generalized
//! information criterion used to pick its penalty.
//!
//! The objective is `||y - X g||_2^2 / n + 2 lambda ||g||_1`. Solves run
//! on precomputed Gram blocks so a whole penalty path costs little more
//! than a single fit.

use super::EstimatorError;
use nalgebra::{DMatrix, DVector};

const CD_TOLERANCE: f64 = 1e-7;
const CD_MAX_SWEEPS: usize = 10_000;

/// Points in the automatic penalty grid.
pub const GIC_GRID_SIZE: usize = 50;
/// Smallest grid point as a fraction of `lambda_max`.
pub const GIC_GRID_FLOOR: f64 = 1e-4;

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// A least-squares problem reduced to its Gram form.
pub(crate) struct LassoProblem {
    /// X'X / n
    gram: DMatrix<f64>,
    /// X'y / n
    xty: DVector<f64>,
    /// y'y / n
    yty: f64,
}

impl LassoProblem {
    pub(crate) fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> LassoProblem {
        let n = x.nrows() as f64;
        LassoProblem {
            gram: x.transpose() * x / n,
            xty: x.transpose() * y / n,
            yty: y.dot(y) / n,
        }
    }

    /// Build directly from Gram blocks (used by nodewise regressions that
    /// share one full-universe Gram matrix).
    pub(crate) fn from_gram(gram: DMatrix<f64>, xty: DVector<f64>, yty: f64) -> LassoProblem {
        LassoProblem { gram, xty, yty }
    }

    pub(crate) fn n_features(&self) -> usize {
        self.xty.len()
    }

    /// Largest penalty with a non-trivial solution, `max_j |X_j'y| / n`.
    pub(crate) fn lambda_max(&self) -> f64 {
        self.xty.amax()
    }

    /// Cyclic coordinate descent from `coef` (updated in place).
    pub(crate) fn solve(
        &self,
        lambda: f64,
        coef: &mut DVector<f64>,
    ) -> Result<usize, EstimatorError> {
        let p = self.n_features();
        for sweep in 1..=CD_MAX_SWEEPS {
            let mut max_change: f64 = 0.0;
            for j in 0..p {
                let cjj = self.gram[(j, j)];
                if cjj <= 0.0 {
                    // Zero-variance column: coefficient pinned at zero.
                    max_change = max_change.max(coef[j].abs());
                    coef[j] = 0.0;
                    continue;
                }
                let old = coef[j];
                // Partial residual correlation with column j.
                let rho = self.xty[j] - self.gram.column(j).dot(coef) + cjj * old;
                let new = soft_threshold(rho, lambda) / cjj;
                if new != old {
                    coef[j] = new;
                    max_change = max_change.max((new - old).abs());
                }
            }
            if max_change < CD_TOLERANCE {
                return Ok(sweep);
            }
        }
        let residual_norm = self.sigma2(coef).max(0.0).sqrt();
        Err(EstimatorError::LassoNonConvergence {
            sweeps: CD_MAX_SWEEPS,
            last_coefficients: coef.iter().copied().collect(),
            residual_norm,
        })
    }

    /// Mean squared residual `||y - X g||^2 / n` for a coefficient vector.
    pub(crate) fn sigma2(&self, coef: &DVector<f64>) -> f64 {
        self.yty - 2.0 * self.xty.dot(coef) + (&self.gram * coef).dot(coef)
    }
}

/// Minimize `||y - X g||_2^2 / n + 2 lambda ||g||_1` by cyclic coordinate
/// descent with soft-thresholding. Converged when no coefficient moves by
/// more than 1e-7 in a sweep; gives up after 10^4 sweeps carrying the last
/// iterate and residual norm.
pub fn lasso_coordinate_descent(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>, EstimatorError> {
    if x.nrows() < 2 {
        return Err(EstimatorError::TooFewObservations {
            context: "lasso",
            required: 2,
            actual: x.nrows(),
        });
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(EstimatorError::InvalidLambda(lambda));
    }
    let problem = LassoProblem::new(x, y);
    let mut coef = DVector::zeros(problem.n_features());
    problem.solve(lambda, &mut coef)?;
    Ok(coef)
}

/// GIC value for a fitted penalty: `log(sigma2) + |S| (log p / n) log(log n)`.
fn gic_value(sigma2: f64, support: usize, p: usize, n: usize) -> f64 {
    sigma2.ln() + support as f64 * ((p as f64).ln() / n as f64) * (n as f64).ln().ln()
}

/// Pick the penalty minimizing the GIC over `grid`. Penalties with an
/// exactly zero residual are skipped with a warning; ties resolve to the
/// smallest penalty.
pub fn gic_select_lambda(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    grid: &[f64],
) -> Result<f64, EstimatorError> {
    let problem = LassoProblem::new(x, y);
    gic_select_on_problem(&problem, x.nrows(), grid).map(|(lambda, _)| lambda)
}

/// Grid-search core shared with the nodewise driver; returns the winning
/// penalty and its coefficient vector.
pub(crate) fn gic_select_on_problem(
    problem: &LassoProblem,
    n: usize,
    grid: &[f64],
) -> Result<(f64, DVector<f64>), EstimatorError> {
    if grid.is_empty() {
        return Err(EstimatorError::EmptyLambdaGrid);
    }
    if let Some(&bad) = grid.iter().find(|l| !l.is_finite() || **l < 0.0) {
        return Err(EstimatorError::InvalidLambda(bad));
    }
    let p = problem.n_features();
    // Descending order so each solve warm-starts the next, denser one.
    let mut path: Vec<f64> = grid.to_vec();
    path.sort_by(|a, b| b.partial_cmp(a).expect("finite lambdas"));
    path.dedup();

    let mut coef = DVector::zeros(p);
    let mut evaluated: Vec<(f64, f64, DVector<f64>)> = Vec::with_capacity(path.len());
    for &lambda in &path {
        problem.solve(lambda, &mut coef)?;
        let sigma2 = problem.sigma2(&coef).max(0.0);
        if sigma2 <= 0.0 {
            log::warn!("gic: lambda {lambda:.3e} fits exactly (sigma2 = 0); skipped");
            continue;
        }
        let support = coef.iter().filter(|c| **c != 0.0).count();
        evaluated.push((lambda, gic_value(sigma2, support, p, n), coef.clone()));
    }
    if evaluated.is_empty() {
        return Err(EstimatorError::AllLambdasDegenerate);
    }
    // Min GIC; on ties the smallest lambda. The path is descending, so a
    // non-strict comparison keeps the later (smaller) candidate.
    let mut best = 0usize;
    for i in 1..evaluated.len() {
        if evaluated[i].1 <= evaluated[best].1 {
            best = i;
        }
    }
    let (lambda, _, coefficients) = evaluated.swap_remove(best);
    Ok((lambda, coefficients))
}

/// Default log-spaced penalty grid `[GIC_GRID_FLOOR * lambda_max, lambda_max]`.
pub fn default_lambda_grid(lambda_max: f64) -> Vec<f64> {
    if lambda_max.is_nan() || lambda_max <= 0.0 {
        return vec![0.0];
    }
    let lo = (GIC_GRID_FLOOR * lambda_max).ln();
    let hi = lambda_max.ln();
    (0..GIC_GRID_SIZE)
        .map(|i| (lo + (hi - lo) * i as f64 / (GIC_GRID_SIZE - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    
    fn gaussian_design(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = crate::rng::stream_rng(seed, "test/lasso/design");
        DMatrix::from_fn(n, p, |_, _| crate::rng::normal(&mut rng))
    }

    /// Normal-equations oracle for the unpenalized fit.
    fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        let xtx = x.transpose() * x;
        let xty = x.transpose() * y;
        xtx.lu().solve(&xty).expect("well-conditioned design")
    }

    #[test]
    fn lambda_zero_matches_ols() {
        let n = 400;
        let p = 6;
        let x = gaussian_design(n, p, 1);
        let mut rng = crate::rng::stream_rng(1, "test/lasso/noise");
        let beta = DVector::from_fn(p, |j, _| if j % 2 == 0 { 1.0 } else { -0.5 });
        let noise = DVector::from_fn(n, |_, _| 0.1 * crate::rng::normal(&mut rng));
        let y = &x * &beta + noise;
        let fitted = lasso_coordinate_descent(&x, &y, 0.0).unwrap();
        let oracle = ols(&x, &y);
        for j in 0..p {
            assert!(
                (fitted[j] - oracle[j]).abs() < 1e-5,
                "coef {j}: {} vs {}",
                fitted[j],
                oracle[j]
            );
        }
    }

    #[test]
    fn lambda_at_max_kills_all_coefficients() {
        let x = gaussian_design(200, 5, 2);
        let mut rng = crate::rng::stream_rng(2, "test/lasso/noise");
        let y = DVector::from_fn(200, |_, _| crate::rng::normal(&mut rng));
        let lambda_max = (x.transpose() * &y / 200.0).amax();
        let fitted = lasso_coordinate_descent(&x, &y, lambda_max).unwrap();
        assert!(fitted.iter().all(|c| *c == 0.0));
        let fitted = lasso_coordinate_descent(&x, &y, lambda_max * 1.5).unwrap();
        assert!(fitted.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn orthonormal_design_soft_thresholds() {
        // Columns scaled so X'X/n = I: soft(X_j'y/n, lambda) in closed form.
        let n = 64usize;
        let p = 4usize;
        let mut x = DMatrix::zeros(n, p);
        // Orthogonal +/-1 pattern columns (Hadamard-like), normalized later.
        for i in 0..n {
            x[(i, 0)] = 1.0;
            x[(i, 1)] = if i % 2 == 0 { 1.0 } else { -1.0 };
            x[(i, 2)] = if (i / 2) % 2 == 0 { 1.0 } else { -1.0 };
            x[(i, 3)] = if (i / 4) % 2 == 0 { 1.0 } else { -1.0 };
        }
        let mut rng = crate::rng::stream_rng(3, "test/lasso/ortho");
        let y = DVector::from_fn(n, |_, _| crate::rng::normal(&mut rng));
        let lambda = 0.05;
        let fitted = lasso_coordinate_descent(&x, &y, lambda).unwrap();
        let xty = x.transpose() * &y / n as f64;
        for j in 0..p {
            let expected = soft_threshold(xty[j], lambda);
            assert!(
                (fitted[j] - expected).abs() < 1e-9,
                "coef {j}: {} vs {}",
                fitted[j],
                expected
            );
        }
    }

    #[test]
    fn gic_singleton_grid_returns_it() {
        let x = gaussian_design(100, 3, 4);
        let mut rng = crate::rng::stream_rng(4, "test/lasso/noise");
        let y = DVector::from_fn(100, |_, _| crate::rng::normal(&mut rng));
        assert_eq!(gic_select_lambda(&x, &y, &[0.123]).unwrap(), 0.123);
        assert!(matches!(
            gic_select_lambda(&x, &y, &[]),
            Err(EstimatorError::EmptyLambdaGrid)
        ));
        assert!(matches!(
            gic_select_lambda(&x, &y, &[-0.1]),
            Err(EstimatorError::InvalidLambda(_))
        ));
    }

    /// Simulation oracle: on pure noise the GIC keeps the model (near)
    /// empty. The honest empty-selection rate at n = 500, p = 50 is about
    /// two thirds, agreed by this implementation, an independent NumPy
    /// coordinate-descent replica, and sklearn's solver: the penalty
    /// `(log p / n) log log n` only clears the largest spurious squared
    /// correlation `~2 log p / n` once `log log n > 2`. The thresholds
    /// below are frozen from those oracle runs.
    #[test]
    fn gic_prefers_empty_model_on_noise() {
        let n = 500;
        let p = 50;
        let mut empty = 0;
        let mut support_total = 0usize;
        for seed in 0..100u64 {
            let mut rng = crate::rng::stream_rng(seed, "test/gic/noise");
            let x = DMatrix::from_fn(n, p, |_, _| crate::rng::normal(&mut rng));
            let y = DVector::from_fn(n, |_, _| crate::rng::normal(&mut rng));
            let problem = LassoProblem::new(&x, &y);
            let grid = default_lambda_grid(problem.lambda_max());
            let (_, coef) = gic_select_on_problem(&problem, n, &grid).unwrap();
            let support = coef.iter().filter(|c| **c != 0.0).count();
            support_total += support;
            if support == 0 {
                empty += 1;
            }
        }
        assert!(empty >= 55, "empty model selected on {empty}/100 seeds");
        let mean_support = support_total as f64 / 100.0;
        assert!(
            mean_support <= 1.5,
            "mean spurious support {mean_support} too large"
        );
    }

    /// Simulation oracle: one strong predictor must enter the model.
    #[test]
    fn gic_keeps_strong_predictor() {
        let n = 500;
        let p = 50;
        let mut kept = 0;
        for seed in 0..100u64 {
            let mut rng = crate::rng::stream_rng(seed, "test/gic/strong");
            let x = DMatrix::from_fn(n, p, |_, _| crate::rng::normal(&mut rng));
            let noise = DVector::from_fn(n, |_, _| 0.5 * crate::rng::normal(&mut rng));
            let y = DVector::from_fn(n, |i, _| x[(i, 7)]) + noise;
            let problem = LassoProblem::new(&x, &y);
            let grid = default_lambda_grid(problem.lambda_max());
            let (_, coef) = gic_select_on_problem(&problem, n, &grid).unwrap();
            if coef[7] != 0.0 {
                kept += 1;
            }
        }
        assert!(kept >= 95, "strong predictor kept on {kept}/100 seeds");
    }
}
