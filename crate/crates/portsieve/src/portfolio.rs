//! Closed-form portfolio weights from a precision estimate.
//!
//! Three objectives: global minimum variance `G1/(1'G1)`, mean-variance
//! with a target monthly return, and maximum Sharpe `Gm/(1'Gm)`. The
//! precision estimate is symmetrized before entering any formula, so
//! quadratic forms stay real for the nodewise family. Weights are
//! unconstrained: short positions are allowed, the only invariant is that
//! they sum to one.

use crate::data::{AssetId, ReturnsMatrix};
use crate::precision::PrecisionEstimate;
use nalgebra::{DMatrix, DVector};
use std::fmt;

/// Sum-to-one tolerance on every emitted weight vector.
const BUDGET_TOLERANCE: f64 = 1e-10;
/// Denominator floor for the weight formulas.
const DENOMINATOR_FLOOR: f64 = 1e-12;
/// Tolerance on the mean-variance constraint checks.
const CONSTRAINT_TOLERANCE: f64 = 1e-8;

/// Default target monthly return for the mean-variance objective.
pub const DEFAULT_TARGET_RETURN: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum PortfolioError {
    #[error("denominator 1'G1 = {0:.3e} too close to zero")]
    DegenerateBudget(f64),
    #[error("denominator 1'Gm = {0:.3e} too close to zero; maximum-Sharpe weights undefined")]
    DegenerateSharpe(f64),
    #[error("mean-variance system degenerate: AD - F^2 = {0:.3e} (mean vector proportional to ones?)")]
    DegenerateMeanVariance(f64),
    #[error("asset lists differ between precision estimate and mean estimate")]
    AssetMismatch,
    #[error("weights failed the {constraint} check by {gap:.3e}")]
    ConstraintViolated { constraint: &'static str, gap: f64 },
    #[error("weight {value} for {asset} is not finite")]
    NonFiniteWeight { asset: AssetId, value: f64 },
}

/// Portfolio objective selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Objective {
    Gmv,
    MeanVariance,
    MaxSharpe,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::Gmv, Objective::MeanVariance, Objective::MaxSharpe];

    pub fn code(self) -> &'static str {
        match self {
            Objective::Gmv => "gmv",
            Objective::MeanVariance => "mv",
            Objective::MaxSharpe => "msr",
        }
    }

    pub fn from_code(code: &str) -> Option<Objective> {
        match code {
            "gmv" => Some(Objective::Gmv),
            "mv" => Some(Objective::MeanVariance),
            "msr" => Some(Objective::MaxSharpe),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Objective::Gmv => "GMV",
            Objective::MeanVariance => "MV",
            Objective::MaxSharpe => "MSR",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Fully-invested weight vector (sums to one, entries may be negative).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub assets: Vec<AssetId>,
    pub weights: DVector<f64>,
}

impl WeightVector {
    pub fn new(assets: Vec<AssetId>, weights: DVector<f64>) -> Result<WeightVector, PortfolioError> {
        for (j, w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(PortfolioError::NonFiniteWeight {
                    asset: assets[j].clone(),
                    value: *w,
                });
            }
        }
        let gap = (weights.sum() - 1.0).abs();
        if gap > BUDGET_TOLERANCE {
            return Err(PortfolioError::ConstraintViolated {
                constraint: "sum-to-one",
                gap,
            });
        }
        Ok(WeightVector { assets, weights })
    }

    pub fn weight(&self, asset: &AssetId) -> Option<f64> {
        self.assets
            .iter()
            .position(|a| a == asset)
            .map(|i| self.weights[i])
    }
}

/// Monthly mean-return estimate aligned with an asset list.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanEstimate {
    pub assets: Vec<AssetId>,
    pub mu: DVector<f64>,
}

/// Column means of the training window.
pub fn estimate_mean(window: &ReturnsMatrix) -> MeanEstimate {
    MeanEstimate {
        assets: window.assets.clone(),
        mu: DVector::from_vec(window.means()),
    }
}

fn checked_gamma(estimate: &PrecisionEstimate) -> DMatrix<f64> {
    estimate.symmetrized()
}

/// Global-minimum-variance weights `G1 / (1'G1)`.
pub fn gmv_weights(estimate: &PrecisionEstimate) -> Result<WeightVector, PortfolioError> {
    let gamma = checked_gamma(estimate);
    let ones = DVector::from_element(gamma.nrows(), 1.0);
    let gamma_ones = &gamma * &ones;
    let denom = gamma_ones.sum();
    if denom.abs() <= DENOMINATOR_FLOOR {
        return Err(PortfolioError::DegenerateBudget(denom));
    }
    WeightVector::new(estimate.assets.clone(), gamma_ones / denom)
}

/// Mean-variance weights hitting the target monthly return `rho`:
/// `((D - rho F)/(AD - F^2)) G1 + ((rho A - F)/(AD - F^2)) Gm`.
pub fn mv_weights(
    estimate: &PrecisionEstimate,
    mean: &MeanEstimate,
    rho: f64,
) -> Result<WeightVector, PortfolioError> {
    if estimate.assets != mean.assets {
        return Err(PortfolioError::AssetMismatch);
    }
    let gamma = checked_gamma(estimate);
    let ones = DVector::from_element(gamma.nrows(), 1.0);
    let gamma_ones = &gamma * &ones;
    let gamma_mu = &gamma * &mean.mu;
    let a = gamma_ones.sum();
    let f = gamma_mu.sum();
    let d = mean.mu.dot(&gamma_mu);
    let det = a * d - f * f;
    if det.abs() <= DENOMINATOR_FLOOR {
        return Err(PortfolioError::DegenerateMeanVariance(det));
    }
    let weights = gamma_ones * ((d - rho * f) / det) + gamma_mu * ((rho * a - f) / det);

    let return_gap = (weights.dot(&mean.mu) - rho).abs();
    if return_gap > CONSTRAINT_TOLERANCE {
        return Err(PortfolioError::ConstraintViolated {
            constraint: "target-return",
            gap: return_gap,
        });
    }
    let budget_gap = (weights.sum() - 1.0).abs();
    if budget_gap > CONSTRAINT_TOLERANCE {
        return Err(PortfolioError::ConstraintViolated {
            constraint: "sum-to-one",
            gap: budget_gap,
        });
    }
    // Renormalize rounding dust so the emitted vector meets the tighter
    // output tolerance.
    let normalized = &weights / weights.sum();
    WeightVector::new(estimate.assets.clone(), normalized)
}

/// Maximum-Sharpe weights `Gm / (1'Gm)`.
pub fn msr_weights(
    estimate: &PrecisionEstimate,
    mean: &MeanEstimate,
) -> Result<WeightVector, PortfolioError> {
    if estimate.assets != mean.assets {
        return Err(PortfolioError::AssetMismatch);
    }
    let gamma = checked_gamma(estimate);
    let gamma_mu = &gamma * &mean.mu;
    let denom = gamma_mu.sum();
    if denom.abs() <= DENOMINATOR_FLOOR {
        return Err(PortfolioError::DegenerateSharpe(denom));
    }
    WeightVector::new(estimate.assets.clone(), gamma_mu / denom)
}

/// Dispatch on objective; `rho` only matters for mean-variance.
pub fn weights_for(
    objective: Objective,
    estimate: &PrecisionEstimate,
    mean: &MeanEstimate,
    rho: f64,
) -> Result<WeightVector, PortfolioError> {
    match objective {
        Objective::Gmv => gmv_weights(estimate),
        Objective::MeanVariance => mv_weights(estimate, mean, rho),
        Objective::MaxSharpe => msr_weights(estimate, mean),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precision::{Diagnostics, Method, PrecisionEstimate};
    use rand::Rng;

    fn assets(p: usize) -> Vec<AssetId> {
        (0..p).map(|j| AssetId::new(format!("A{j:03}"))).collect()
    }

    fn estimate_from(gamma: DMatrix<f64>) -> PrecisionEstimate {
        PrecisionEstimate::new(assets(gamma.nrows()), gamma, Method::Nls, Diagnostics::default())
            .unwrap()
    }

    fn mean_from(mu: Vec<f64>) -> MeanEstimate {
        MeanEstimate {
            assets: assets(mu.len()),
            mu: DVector::from_vec(mu),
        }
    }

    fn random_spd(p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(p, p) * (p as f64 * 0.5)
    }

    #[test]
    fn identity_gamma_gives_equal_weights() {
        let est = estimate_from(DMatrix::identity(4, 4));
        let w = gmv_weights(&est).unwrap();
        for j in 0..4 {
            assert!((w.weights[j] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn gmv_scale_invariant() {
        let mut rng = crate::rng::stream_rng(71, "test/portfolio/scale");
        let gamma = random_spd(5, &mut rng);
        let a = gmv_weights(&estimate_from(gamma.clone())).unwrap();
        let b = gmv_weights(&estimate_from(gamma * 7.3)).unwrap();
        assert!((&a.weights - &b.weights).amax() < 1e-12);
    }

    #[test]
    fn mv_two_asset_closed_form() {
        let est = estimate_from(DMatrix::identity(2, 2));
        let mean = mean_from(vec![0.02, 0.0]);
        let w = mv_weights(&est, &mean, 0.01).unwrap();
        assert!((w.weights[0] - 0.5).abs() < 1e-12);
        assert!((w.weights[1] - 0.5).abs() < 1e-12);
        assert!((w.weights.dot(&mean.mu) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn mv_rejects_mean_proportional_to_ones() {
        let mut rng = crate::rng::stream_rng(72, "test/portfolio/degen");
        let est = estimate_from(random_spd(4, &mut rng));
        let mean = mean_from(vec![0.01; 4]);
        assert!(matches!(
            mv_weights(&est, &mean, 0.02),
            Err(PortfolioError::DegenerateMeanVariance(_))
        ));
    }

    #[test]
    fn msr_equal_mean_equal_weights_and_scale_invariance() {
        let est = estimate_from(DMatrix::identity(3, 3));
        let w = msr_weights(&est, &mean_from(vec![0.03; 3])).unwrap();
        for j in 0..3 {
            assert!((w.weights[j] - 1.0 / 3.0).abs() < 1e-14);
        }
        let mut rng = crate::rng::stream_rng(73, "test/portfolio/msr");
        let gamma = random_spd(5, &mut rng);
        let mu: Vec<f64> = (0..5).map(|_| rng.gen_range(0.001..0.03)).collect();
        let a = msr_weights(&estimate_from(gamma.clone()), &mean_from(mu.clone())).unwrap();
        let scaled: Vec<f64> = mu.iter().map(|m| m * 4.0).collect();
        let b = msr_weights(&estimate_from(gamma), &mean_from(scaled)).unwrap();
        assert!((&a.weights - &b.weights).amax() < 1e-12);
    }

    #[test]
    fn msr_degenerate_denominator_rejected() {
        let est = estimate_from(DMatrix::identity(2, 2));
        // Gm sums to zero for an antisymmetric mean under the identity.
        let mean = mean_from(vec![0.01, -0.01]);
        assert!(matches!(
            msr_weights(&est, &mean),
            Err(PortfolioError::DegenerateSharpe(_))
        ));
    }

    #[test]
    fn mean_estimate_is_column_means() {
        use crate::dates::Month;
        let values = DMatrix::from_row_slice(2, 2, &[0.02, 0.01, 0.00, 0.01]);
        let window = ReturnsMatrix {
            assets: assets(2),
            dates: vec![Month::new(2020, 1).unwrap(), Month::new(2020, 2).unwrap()],
            values,
        };
        let mean = estimate_mean(&window);
        assert!((mean.mu[0] - 0.01).abs() < 1e-15);
        assert!((mean.mu[1] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn mean_matches_brute_force_on_random_panels() {
        use crate::dates::Month;
        let mut rng = crate::rng::stream_rng(74, "test/portfolio/mean");
        for _ in 0..200 {
            let n = rng.gen_range(2..20);
            let p = rng.gen_range(1..6);
            let values = DMatrix::from_fn(n, p, |_, _| rng.gen_range(-0.1..0.1));
            let window = ReturnsMatrix {
                assets: assets(p),
                dates: (0..n)
                    .map(|t| Month::new(2020, 1).unwrap().add_months(t as i32))
                    .collect(),
                values: values.clone(),
            };
            let mean = estimate_mean(&window);
            for j in 0..p {
                let mut s = 0.0;
                for t in 0..n {
                    s += values[(t, j)];
                }
                assert!((mean.mu[j] - s / n as f64).abs() < 1e-12);
            }
        }
    }

    /// Sampled optimality: GMV variance below 10^4 random unit-sum vectors.
    #[test]
    fn gmv_beats_random_unit_sum_vectors() {
        let mut rng = crate::rng::stream_rng(75, "test/portfolio/gmvopt");
        let gamma = random_spd(5, &mut rng);
        let sigma = gamma.clone().try_inverse().unwrap();
        let est = estimate_from(gamma);
        let w = gmv_weights(&est).unwrap();
        let var_opt = (&sigma * &w.weights).dot(&w.weights);
        for _ in 0..10_000 {
            let mut v: DVector<f64> = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..2.0));
            v /= v.sum();
            if !v.iter().all(|x| x.is_finite()) {
                continue;
            }
            let var = (&sigma * &v).dot(&v);
            assert!(var + 1e-12 >= var_opt);
        }
    }

    /// Random-search oracle: MSR weights beat 10^5 random unit-sum vectors
    /// on the implied Sharpe ratio.
    #[test]
    fn msr_beats_random_search() {
        let mut rng = crate::rng::stream_rng(76, "test/portfolio/msropt");
        let gamma = random_spd(5, &mut rng);
        let sigma = gamma.clone().try_inverse().unwrap();
        let mu = DVector::from_fn(5, |_, _| rng.gen_range(0.005..0.03));
        let est = estimate_from(gamma);
        let mean = MeanEstimate {
            assets: assets(5),
            mu: mu.clone(),
        };
        let w = msr_weights(&est, &mean).unwrap();
        let sharpe = |v: &DVector<f64>| v.dot(&mu) / (&sigma * v).dot(v).sqrt();
        let best = sharpe(&w.weights);
        for _ in 0..100_000 {
            let mut v: DVector<f64> = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..2.0));
            let s = v.sum();
            if s.abs() < 1e-6 {
                continue;
            }
            v /= s;
            assert!(sharpe(&v) <= best + 1e-9);
        }
    }
}
