//! Monte-Carlo validation of screened Sharpe-ratio consistency.
//!
//! Synthetic factor markets with known covariance and mean, screening
//! processes that either respect or ignore the sensible-screening
//! definition, and a convergence experiment that tracks
//! `|SR_hat^2 / SR_target^2 - 1|` across sample sizes. A sensible screen
//! recovers the whole optimal set whenever it selects at least `p*` names
//! and selects only optimal names otherwise.

use crate::data::{AssetId, ReturnsMatrix};
use crate::dates::Month;
use crate::portfolio::estimate_mean;
use crate::precision::{nodewise_precision, EstimatorError};
use crate::rng::stream_rng;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, thiserror::Error)]
pub enum TheoryError {
    #[error("optimal size {p_star} must satisfy 1 <= p* <= p = {p}")]
    BadOptimalSize { p_star: usize, p: usize },
    #[error("screen size {p_hat} must satisfy 1 <= p_hat <= p = {p}")]
    BadScreenSize { p_hat: usize, p: usize },
    #[error("market needs at least one factor with a variance per factor")]
    NoFactors,
    #[error("true covariance is not invertible")]
    SingularCovariance,
    #[error("quadratic form 1'G1 = {0:.3e} is not positive; Sharpe formula undefined")]
    NonPositiveQuadraticForm(f64),
    #[error("experiment grid must be ascending and non-empty")]
    BadGrid,
    #[error("experiment needs at least 10 replications, got {0}")]
    TooFewReplications(usize),
    #[error("estimator failed on {failures}/{replications} replications at n = {n} (above the 20% budget); first error: {first}")]
    FailureBudgetExceeded {
        n: usize,
        failures: usize,
        replications: usize,
        first: String,
    },
}

/// Population parameters of the synthetic factor market.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MarketConfig {
    pub n_factors: usize,
    pub factor_variances: Vec<f64>,
    pub error_variance_range: (f64, f64),
    pub mean_range: (f64, f64),
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            n_factors: 3,
            factor_variances: vec![0.04, 0.02, 0.01],
            error_variance_range: (0.01, 0.05),
            mean_range: (0.0, 0.02),
        }
    }
}

/// A fully known market: covariance, mean, precision, and the optimal set
/// (the `p*` assets with the highest true per-asset Sharpe ratio).
#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    pub assets: Vec<AssetId>,
    pub sigma: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub gamma: DMatrix<f64>,
    /// Indices of the optimal set, ascending.
    pub optimal: Vec<usize>,
    pub seed: u64,
}

impl SyntheticMarket {
    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn p_star(&self) -> usize {
        self.optimal.len()
    }

    pub fn optimal_assets(&self) -> Vec<AssetId> {
        self.optimal.iter().map(|&i| self.assets[i].clone()).collect()
    }

    /// Covariance block restricted to `indices` (ascending subset).
    pub fn sigma_block(&self, indices: &[usize]) -> DMatrix<f64> {
        let k = indices.len();
        DMatrix::from_fn(k, k, |a, b| self.sigma[(indices[a], indices[b])])
    }

    pub fn mu_block(&self, indices: &[usize]) -> DVector<f64> {
        DVector::from_fn(indices.len(), |a, _| self.mu[indices[a]])
    }
}

/// Outcome of one screening draw.
#[derive(Debug, Clone)]
pub struct ScreeningOutcome {
    /// Selected indices, ascending.
    pub selected: Vec<usize>,
    pub p_hat: usize,
    /// Whether the draw satisfies the sensible-screening definition.
    pub sensible: bool,
}

/// Draw a market and an n-month return sample from it. All randomness is
/// derived from `seed` through named streams, so a fixed seed reproduces
/// the market bit for bit.
pub fn simulate_market(
    p: usize,
    p_star: usize,
    config: &MarketConfig,
    n: usize,
    seed: u64,
) -> Result<(SyntheticMarket, ReturnsMatrix), TheoryError> {
    if p_star < 1 || p_star > p {
        return Err(TheoryError::BadOptimalSize { p_star, p });
    }
    let k = config.n_factors;
    if k < 1 || config.factor_variances.len() != k {
        return Err(TheoryError::NoFactors);
    }

    let mut structure_rng = stream_rng(seed, "theory/market/structure");
    let loadings = DMatrix::from_fn(p, k, |_, _| crate::rng::normal(&mut structure_rng));
    let (e_lo, e_hi) = config.error_variance_range;
    let error_variances: Vec<f64> = (0..p).map(|_| structure_rng.gen_range(e_lo..e_hi)).collect();
    let (m_lo, m_hi) = config.mean_range;
    let mu = DVector::from_fn(p, |_, _| structure_rng.gen_range(m_lo..m_hi));

    let mut sigma = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let mut v = 0.0;
            for f in 0..k {
                v += loadings[(i, f)] * loadings[(j, f)] * config.factor_variances[f];
            }
            sigma[(i, j)] = v;
        }
        sigma[(i, i)] += error_variances[i];
    }
    let gamma = sigma
        .clone()
        .try_inverse()
        .ok_or(TheoryError::SingularCovariance)?;
    debug_assert!((&gamma * &sigma - DMatrix::identity(p, p)).amax() < 1e-8);

    // Optimal set: highest true per-asset Sharpe, index order breaking ties.
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        let sa = mu[a] / sigma[(a, a)].sqrt();
        let sb = mu[b] / sigma[(b, b)].sqrt();
        sb.partial_cmp(&sa).expect("finite sharpe").then(a.cmp(&b))
    });
    let mut optimal: Vec<usize> = order[..p_star].to_vec();
    optimal.sort_unstable();

    // Sample draws.
    let mut draw_rng = stream_rng(seed, "theory/market/draws");
    let factor_sds: Vec<f64> = config.factor_variances.iter().map(|v| v.sqrt()).collect();
    let error_sds: Vec<f64> = error_variances.iter().map(|v| v.sqrt()).collect();
    let mut values = DMatrix::zeros(n, p);
    for t in 0..n {
        let factors: Vec<f64> = factor_sds
            .iter()
            .map(|sd| sd * crate::rng::normal(&mut draw_rng))
            .collect();
        for j in 0..p {
            let mut r = mu[j] + error_sds[j] * crate::rng::normal(&mut draw_rng);
            for f in 0..k {
                r += loadings[(j, f)] * factors[f];
            }
            values[(t, j)] = r;
        }
    }

    let assets: Vec<AssetId> = (0..p).map(|j| AssetId::new(format!("S{j:04}"))).collect();
    let start = Month::new(2000, 1).expect("valid month");
    let dates: Vec<Month> = (0..n).map(|t| start.add_months(t as i32)).collect();
    let market = SyntheticMarket {
        assets: assets.clone(),
        sigma,
        mu,
        gamma,
        optimal,
        seed,
    };
    let sample = ReturnsMatrix {
        assets,
        dates,
        values,
    };
    Ok((market, sample))
}

/// A sensible screening draw: with `p_hat >= p*` the optimal set plus
/// uniformly drawn non-optimal padding; with `p_hat < p*` a uniform
/// subset of the optimal set.
pub fn sensible_screen(
    market: &SyntheticMarket,
    p_hat: usize,
    seed: u64,
) -> Result<ScreeningOutcome, TheoryError> {
    let p = market.p();
    if p_hat < 1 || p_hat > p {
        return Err(TheoryError::BadScreenSize { p_hat, p });
    }
    let mut rng = stream_rng(seed, "theory/screen/sensible");
    let mut selected: Vec<usize>;
    if p_hat >= market.p_star() {
        selected = market.optimal.clone();
        let mut others: Vec<usize> = (0..p).filter(|i| !market.optimal.contains(i)).collect();
        others.shuffle(&mut rng);
        selected.extend(others.into_iter().take(p_hat - market.p_star()));
    } else {
        let mut pool = market.optimal.clone();
        pool.shuffle(&mut rng);
        selected = pool.into_iter().take(p_hat).collect();
    }
    selected.sort_unstable();
    Ok(ScreeningOutcome {
        sensible: is_sensible(market, &selected),
        p_hat: selected.len(),
        selected,
    })
}

/// A deliberately non-sensible contrast: a uniform subset of the whole
/// universe, ignoring the optimal set.
pub fn random_screen(
    market: &SyntheticMarket,
    p_hat: usize,
    seed: u64,
) -> Result<ScreeningOutcome, TheoryError> {
    let p = market.p();
    if p_hat < 1 || p_hat > p {
        return Err(TheoryError::BadScreenSize { p_hat, p });
    }
    let mut rng = stream_rng(seed, "theory/screen/random");
    let mut pool: Vec<usize> = (0..p).collect();
    pool.shuffle(&mut rng);
    let mut selected: Vec<usize> = pool.into_iter().take(p_hat).collect();
    selected.sort_unstable();
    Ok(ScreeningOutcome {
        sensible: is_sensible(market, &selected),
        p_hat: selected.len(),
        selected,
    })
}

/// Direct check of the sensible-screening definition.
pub fn is_sensible(market: &SyntheticMarket, selected: &[usize]) -> bool {
    if selected.len() >= market.p_star() {
        market.optimal.iter().all(|i| selected.contains(i))
    } else {
        selected.iter().all(|i| market.optimal.contains(i))
    }
}

/// Estimated screened Sharpe ratio
/// `sqrt(p) (1'G m / p) (1'G 1 / p)^{-1/2}` on a p x p precision estimate
/// and mean vector.
pub fn estimated_sr(gamma: &DMatrix<f64>, mu: &DVector<f64>) -> Result<f64, TheoryError> {
    let p = gamma.nrows() as f64;
    let ones = DVector::from_element(gamma.nrows(), 1.0);
    let quad = (gamma * &ones).sum();
    if quad <= 0.0 {
        return Err(TheoryError::NonPositiveQuadraticForm(quad));
    }
    let cross = (gamma * mu).sum();
    Ok(p.sqrt() * (cross / p) / (quad / p).sqrt())
}

/// Target Sharpe ratio on the optimal set: the covariance is restricted
/// to the optimal block first and inverted after restriction.
pub fn target_sr(market: &SyntheticMarket) -> Result<f64, TheoryError> {
    let sigma_star = market.sigma_block(&market.optimal);
    let gamma_star = sigma_star
        .try_inverse()
        .ok_or(TheoryError::SingularCovariance)?;
    estimated_sr(&gamma_star, &market.mu_block(&market.optimal))
}

/// Which estimator the convergence experiment plugs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoryEstimator {
    /// Truth restricted to the screened set (no estimation error).
    Oracle,
    /// Nodewise regressions on the screened sample.
    Nodewise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScreeningMode {
    Sensible,
    Random,
}

/// Convergence experiment settings. `p*` grows as `floor(sqrt(n))` and the
/// screened size is `p* + U{-d..d}`, so the relative size error vanishes
/// along the grid.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TheorySpec {
    pub grid: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub estimator: TheoryEstimator,
    pub screening: ScreeningMode,
    /// Half-width d of the screen-size error.
    pub size_error: usize,
    /// Universe size as a multiple of p*.
    pub universe_multiple: usize,
    pub market: MarketConfig,
}

impl Default for TheorySpec {
    fn default() -> Self {
        TheorySpec {
            grid: vec![120, 360, 1080],
            replications: 50,
            seed: 7,
            estimator: TheoryEstimator::Nodewise,
            screening: ScreeningMode::Sensible,
            size_error: 2,
            universe_multiple: 2,
            market: MarketConfig::default(),
        }
    }
}

/// One grid point of the convergence table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvergencePoint {
    pub n: usize,
    pub p_star: usize,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
    pub fail_rate: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvergenceTable {
    pub points: Vec<ConvergencePoint>,
    /// Medians weakly decreasing along the grid.
    pub converged: bool,
}

/// Run the squared-Sharpe ratio-error experiment `|SR_hat^2 / SR_target^2 - 1|` across
/// the sample-size grid.
pub fn sharpe_consistency_experiment(spec: &TheorySpec) -> Result<ConvergenceTable, TheoryError> {
    if spec.grid.is_empty() || spec.grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(TheoryError::BadGrid);
    }
    if spec.replications < 10 {
        return Err(TheoryError::TooFewReplications(spec.replications));
    }

    let mut points = Vec::with_capacity(spec.grid.len());
    for &n in &spec.grid {
        let p_star = (n as f64).sqrt().floor() as usize;
        let p = (p_star * spec.universe_multiple.max(1)).max(p_star + spec.size_error + 1);
        let mut errors = Vec::with_capacity(spec.replications);
        let mut failures = 0usize;
        let mut first_error: Option<String> = None;
        for rep in 0..spec.replications {
            let mut rep_rng = stream_rng(spec.seed, &format!("theory/experiment/{n}/{rep}"));
            let market_seed: u64 = rep_rng.gen();
            match run_replication(spec, n, p, p_star, market_seed, &mut rep_rng) {
                Ok(err) => errors.push(err),
                Err(e) => {
                    failures += 1;
                    first_error.get_or_insert(e);
                }
            }
        }
        if failures * 5 > spec.replications {
            return Err(TheoryError::FailureBudgetExceeded {
                n,
                failures,
                replications: spec.replications,
                first: first_error.unwrap_or_default(),
            });
        }
        points.push(ConvergencePoint {
            n,
            p_star,
            q10: crate::data::percentile_linear(&errors, 0.10),
            q50: crate::data::percentile_linear(&errors, 0.50),
            q90: crate::data::percentile_linear(&errors, 0.90),
            fail_rate: failures as f64 / spec.replications as f64,
        });
    }
    let converged = points.windows(2).all(|w| w[1].q50 <= w[0].q50);
    Ok(ConvergenceTable { points, converged })
}

fn run_replication(
    spec: &TheorySpec,
    n: usize,
    p: usize,
    p_star: usize,
    market_seed: u64,
    rep_rng: &mut rand_chacha::ChaCha12Rng,
) -> Result<f64, String> {
    let (market, sample) =
        simulate_market(p, p_star, &spec.market, n, market_seed).map_err(|e| e.to_string())?;
    let d = spec.size_error as i64;
    let offset = rep_rng.gen_range(-d..=d);
    let p_hat = ((p_star as i64 + offset).max(1) as usize).min(p);
    let screen_seed: u64 = rep_rng.gen();
    let outcome = match spec.screening {
        ScreeningMode::Sensible => sensible_screen(&market, p_hat, screen_seed),
        ScreeningMode::Random => random_screen(&market, p_hat, screen_seed),
    }
    .map_err(|e| e.to_string())?;

    let (gamma_hat, mu_hat) = match spec.estimator {
        TheoryEstimator::Oracle => {
            let sigma = market.sigma_block(&outcome.selected);
            let gamma = sigma
                .try_inverse()
                .ok_or_else(|| "singular oracle block".to_string())?;
            (gamma, market.mu_block(&outcome.selected))
        }
        TheoryEstimator::Nodewise => {
            let selected_assets: Vec<AssetId> = outcome
                .selected
                .iter()
                .map(|&i| market.assets[i].clone())
                .collect();
            let window = sample.select_assets(&selected_assets);
            let mean = estimate_mean(&window);
            let est = nodewise_precision(&window).map_err(|e: EstimatorError| e.to_string())?;
            (est.gamma, mean.mu)
        }
    };
    let sr_hat = estimated_sr(&gamma_hat, &mu_hat).map_err(|e| e.to_string())?;
    let sr_target = target_sr(&market).map_err(|e| e.to_string())?;
    Ok(((sr_hat * sr_hat) / (sr_target * sr_target) - 1.0).abs())
}

/// Assumption diagnostics for a screened estimate: block norms around the
/// optimal set, sup-norm errors against the truth, and the scaled
/// mean/eigenvalue bounds. Purely descriptive.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DiagnosticRecord {
    /// Max row sums of the off-target blocks (upper-right, lower-left,
    /// lower-right) when the screened set extends past the overlap.
    pub off_block_norms: Vec<f64>,
    /// Sup norm (max row sum) of gamma_hat - gamma on the common block.
    pub common_block_error: f64,
    pub max_mean_error: f64,
    pub min_eigenvalue_target: f64,
    pub scaled_mean_form: f64,
}

/// Max row sum of absolute values.
pub fn linf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Split a square matrix into blocks around the leading k x k corner.
pub fn decompose_blocks(
    m: &DMatrix<f64>,
    k: usize,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let p = m.nrows();
    let a = DMatrix::from_fn(k, k, |i, j| m[(i, j)]);
    let b = DMatrix::from_fn(k, p - k, |i, j| m[(i, k + j)]);
    let c = DMatrix::from_fn(p - k, k, |i, j| m[(k + i, j)]);
    let d = DMatrix::from_fn(p - k, p - k, |i, j| m[(k + i, k + j)]);
    (a, b, c, d)
}

/// Reassemble the four blocks of [`decompose_blocks`].
pub fn reassemble_blocks(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> DMatrix<f64> {
    let k = a.nrows();
    let p = k + d.nrows();
    DMatrix::from_fn(p, p, |i, j| match (i < k, j < k) {
        (true, true) => a[(i, j)],
        (true, false) => b[(i, j - k)],
        (false, true) => c[(i - k, j)],
        (false, false) => d[(i - k, j - k)],
    })
}

/// Compute the diagnostic record for a screened estimate. `selected` are
/// universe indices (ascending) matching `gamma_hat`'s row ordering.
pub fn assumption_diagnostics(
    market: &SyntheticMarket,
    selected: &[usize],
    gamma_hat: &DMatrix<f64>,
    mu_hat: &DVector<f64>,
) -> DiagnosticRecord {
    let p_star = market.p_star();
    let p_hat = selected.len();

    // Reorder the screened set so the overlap with the optimal set leads.
    let mut lead: Vec<usize> = Vec::new();
    let mut tail: Vec<usize> = Vec::new();
    for (pos, idx) in selected.iter().enumerate() {
        if market.optimal.contains(idx) {
            lead.push(pos);
        } else {
            tail.push(pos);
        }
    }
    let order: Vec<usize> = lead.iter().chain(tail.iter()).copied().collect();
    let overlap = lead.len();
    let reordered = DMatrix::from_fn(p_hat, p_hat, |i, j| gamma_hat[(order[i], order[j])]);

    let off_block_norms = if overlap > 0 && overlap < p_hat {
        let (_, b, c, d) = decompose_blocks(&reordered, overlap);
        vec![linf_norm(&b), linf_norm(&c), linf_norm(&d)]
    } else {
        Vec::new()
    };

    // Truth on the overlapping assets, extracted from the target precision
    // (restricted to the optimal set, then inverted).
    let sigma_star = market.sigma_block(&market.optimal);
    let gamma_star = sigma_star
        .clone()
        .try_inverse()
        .expect("target covariance invertible");
    let common_block_error = if overlap > 0 {
        let star_pos: Vec<usize> = order[..overlap]
            .iter()
            .map(|&pos| {
                market
                    .optimal
                    .iter()
                    .position(|o| *o == selected[pos])
                    .expect("overlap assets are optimal")
            })
            .collect();
        let diff = DMatrix::from_fn(overlap, overlap, |i, j| {
            reordered[(i, j)] - gamma_star[(star_pos[i], star_pos[j])]
        });
        linf_norm(&diff)
    } else {
        f64::NAN
    };

    let max_mean_error = (0..p_hat)
        .map(|pos| (mu_hat[pos] - market.mu[selected[pos]]).abs())
        .fold(0.0, f64::max);

    let eig_min = gamma_star
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let mu_star = market.mu_block(&market.optimal);
    let ones = DVector::from_element(p_star, 1.0);
    let scaled_mean_form = ((&gamma_star * &mu_star).dot(&ones) / p_star as f64).abs();

    DiagnosticRecord {
        off_block_norms,
        common_block_error,
        max_mean_error,
        min_eigenvalue_target: eig_min,
        scaled_mean_form,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> MarketConfig {
        MarketConfig::default()
    }

    #[test]
    fn sample_covariance_approaches_truth() {
        let (market, sample) = simulate_market(8, 3, &small_config(), 100_000, 11).unwrap();
        let demeaned = sample.demeaned();
        let cov = &demeaned.transpose() * &demeaned / sample.n_obs() as f64;
        let gap = (&cov - &market.sigma).amax();
        assert!(gap < 0.05, "max abs covariance gap {gap}");
    }

    #[test]
    fn fixed_seed_reproduces_market() {
        let (m1, s1) = simulate_market(10, 4, &small_config(), 50, 13).unwrap();
        let (m2, s2) = simulate_market(10, 4, &small_config(), 50, 13).unwrap();
        assert_eq!(m1.sigma, m2.sigma);
        assert_eq!(m1.mu, m2.mu);
        assert_eq!(m1.optimal, m2.optimal);
        assert_eq!(s1.values, s2.values);
    }

    #[test]
    fn full_optimal_set_is_whole_universe() {
        let (market, _) = simulate_market(6, 6, &small_config(), 10, 17).unwrap();
        assert_eq!(market.optimal, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn gamma_inverts_sigma() {
        let (market, _) = simulate_market(12, 5, &small_config(), 10, 19).unwrap();
        let gap = (&market.gamma * &market.sigma - DMatrix::identity(12, 12)).amax();
        assert!(gap < 1e-8);
    }

    /// Direct set checks of the definition on every draw.
    #[test]
    fn sensible_screen_satisfies_definition() {
        let (market, _) = simulate_market(20, 5, &small_config(), 10, 23).unwrap();
        for p_hat in 1..=20 {
            for seed in 0..20u64 {
                let outcome = sensible_screen(&market, p_hat, seed).unwrap();
                assert_eq!(outcome.p_hat, p_hat);
                assert!(outcome.sensible);
                if p_hat >= market.p_star() {
                    for idx in &market.optimal {
                        assert!(outcome.selected.contains(idx));
                    }
                } else {
                    for idx in &outcome.selected {
                        assert!(market.optimal.contains(idx));
                    }
                }
            }
        }
        // Exactly p* forces exactly the optimal set.
        let outcome = sensible_screen(&market, market.p_star(), 99).unwrap();
        assert_eq!(outcome.selected, market.optimal);
    }

    #[test]
    fn screen_size_one_picks_an_optimal_name() {
        let (market, _) = simulate_market(10, 2, &small_config(), 10, 29).unwrap();
        for seed in 0..50u64 {
            let outcome = sensible_screen(&market, 1, seed).unwrap();
            assert!(market.optimal.contains(&outcome.selected[0]));
        }
    }

    #[test]
    fn estimated_sr_closed_forms() {
        // Identity precision, constant mean c: SR = c sqrt(p).
        let p = 7;
        let c = 0.013;
        let gamma = DMatrix::identity(p, p);
        let mu = DVector::from_element(p, c);
        let sr = estimated_sr(&gamma, &mu).unwrap();
        assert!((sr - c * (p as f64).sqrt()).abs() < 1e-14);
        // Nonpositive quadratic form errors.
        let bad = DMatrix::from_element(2, 2, -1.0);
        assert!(matches!(
            estimated_sr(&bad, &DVector::from_element(2, 0.01)),
            Err(TheoryError::NonPositiveQuadraticForm(_))
        ));
    }

    #[test]
    fn estimated_sr_permutation_invariant_and_matches_naive() {
        let mut rng = stream_rng(31, "test/theory/perm");
        for _ in 0..100 {
            let p = rng.gen_range(2..8);
            let a = DMatrix::from_fn(p, p, |_, _| crate::rng::normal(&mut rng));
            let gamma = &a * a.transpose() + DMatrix::identity(p, p);
            let mu = DVector::from_fn(p, |_, _| rng.gen_range(0.0..0.03));

            // Naive recomputation with explicit sums.
            let mut cross = 0.0;
            let mut quad = 0.0;
            for i in 0..p {
                for j in 0..p {
                    cross += gamma[(i, j)] * mu[j];
                    quad += gamma[(i, j)];
                }
            }
            let naive = (p as f64).sqrt() * (cross / p as f64) / (quad / p as f64).sqrt();
            let sr = estimated_sr(&gamma, &mu).unwrap();
            assert!((sr - naive).abs() < 1e-12);

            // Simultaneous permutation leaves the scalar unchanged.
            let mut perm: Vec<usize> = (0..p).collect();
            perm.shuffle(&mut rng);
            let gamma_p = DMatrix::from_fn(p, p, |i, j| gamma[(perm[i], perm[j])]);
            let mu_p = DVector::from_fn(p, |i, _| mu[perm[i]]);
            let sr_p = estimated_sr(&gamma_p, &mu_p).unwrap();
            assert!((sr - sr_p).abs() < 1e-12);
        }
    }

    #[test]
    fn target_sr_scalar_and_independent_cases() {
        // p* = 1: mu / sigma.
        let market = SyntheticMarket {
            assets: vec![AssetId::from("A"), AssetId::from("B")],
            sigma: DMatrix::from_row_slice(2, 2, &[0.04, 0.0, 0.0, 0.09]),
            mu: DVector::from_vec(vec![0.02, 0.01]),
            gamma: DMatrix::from_row_slice(2, 2, &[25.0, 0.0, 0.0, 1.0 / 0.09]),
            optimal: vec![0],
            seed: 0,
        };
        let sr = target_sr(&market).unwrap();
        assert!((sr - 0.02 / 0.2).abs() < 1e-14);

        // Independent equal assets: sqrt(p*) mu / sigma.
        let p = 4;
        let market = SyntheticMarket {
            assets: (0..p).map(|i| AssetId::new(format!("A{i}"))).collect(),
            sigma: DMatrix::identity(p, p) * 0.04,
            mu: DVector::from_element(p, 0.01),
            gamma: DMatrix::identity(p, p) * 25.0,
            optimal: (0..p).collect(),
            seed: 0,
        };
        let sr = target_sr(&market).unwrap();
        assert!((sr - 2.0 * 0.01 / 0.2).abs() < 1e-14);
    }

    /// Restriction oracle: restrict-then-invert computed by hand.
    #[test]
    fn target_sr_matches_restriction_oracle() {
        let (market, _) = simulate_market(9, 4, &small_config(), 10, 37).unwrap();
        let idx = &market.optimal;
        let k = idx.len();
        let mut sigma_star = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                sigma_star[(a, b)] = market.sigma[(idx[a], idx[b])];
            }
        }
        let gamma_star = sigma_star.try_inverse().unwrap();
        let mu_star = DVector::from_fn(k, |a, _| market.mu[idx[a]]);
        let oracle = estimated_sr(&gamma_star, &mu_star).unwrap();
        assert!((target_sr(&market).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn oracle_estimator_with_exact_size_has_zero_error() {
        let spec = TheorySpec {
            grid: vec![100, 400],
            replications: 10,
            seed: 3,
            estimator: TheoryEstimator::Oracle,
            screening: ScreeningMode::Sensible,
            size_error: 0,
            universe_multiple: 2,
            market: MarketConfig::default(),
        };
        let table = sharpe_consistency_experiment(&spec).unwrap();
        for point in &table.points {
            assert!(point.q90 < 1e-10, "oracle ratio error {}", point.q90);
            assert_eq!(point.fail_rate, 0.0);
        }
        assert!(table.converged);
    }

    #[test]
    fn experiment_validates_inputs() {
        let spec = TheorySpec {
            grid: vec![200, 100],
            ..TheorySpec::default()
        };
        assert!(matches!(
            sharpe_consistency_experiment(&spec),
            Err(TheoryError::BadGrid)
        ));
        let spec = TheorySpec {
            replications: 5,
            ..TheorySpec::default()
        };
        assert!(matches!(
            sharpe_consistency_experiment(&spec),
            Err(TheoryError::TooFewReplications(5))
        ));
    }

    #[test]
    fn block_decomposition_reassembles_exactly() {
        let mut rng = stream_rng(41, "test/theory/blocks");
        for _ in 0..50 {
            let p = rng.gen_range(3..10);
            let k = rng.gen_range(1..p);
            let m = DMatrix::from_fn(p, p, |_, _| crate::rng::normal(&mut rng));
            let (a, b, c, d) = decompose_blocks(&m, k);
            assert_eq!(reassemble_blocks(&a, &b, &c, &d), m);
        }
    }

    #[test]
    fn oracle_diagnostics_are_zero() {
        let (market, _) = simulate_market(12, 5, &small_config(), 10, 43).unwrap();
        let selected = market.optimal.clone();
        let sigma_star = market.sigma_block(&selected);
        let gamma_star = sigma_star.try_inverse().unwrap();
        let mu_star = market.mu_block(&selected);
        let record = assumption_diagnostics(&market, &selected, &gamma_star, &mu_star);
        assert!(record.off_block_norms.is_empty());
        assert!(record.common_block_error < 1e-12);
        assert!(record.max_mean_error < 1e-15);
        assert!(record.min_eigenvalue_target > 0.0);
        assert!(record.scaled_mean_form > 0.0);
    }

    /// Two-point simulation: the common-block sup error shrinks in n.
    #[test]
    fn common_block_error_decreases_with_n() {
        let config = small_config();
        let mut errors = Vec::new();
        for &n in &[200usize, 800] {
            let mut total = 0.0;
            for seed in 0..3u64 {
                let (market, sample) = simulate_market(8, 8, &config, n, 47 + seed).unwrap();
                let est = nodewise_precision(&sample).unwrap();
                let mean = estimate_mean(&sample);
                let selected: Vec<usize> = (0..8).collect();
                let record = assumption_diagnostics(&market, &selected, &est.gamma, &mean.mu);
                total += record.common_block_error;
            }
            errors.push(total / 3.0);
        }
        assert!(
            errors[1] < errors[0],
            "sup-norm error did not shrink: {errors:?}"
        );
    }
}
