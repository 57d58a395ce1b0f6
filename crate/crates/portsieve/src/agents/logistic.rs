//! Cross-sectional logistic screen.
//!
//! Fits a logistic regression of the positive-next-month-return indicator
//! on standardized characteristics by iteratively reweighted least
//! squares, scores a target cross-section, and flags the top decile of
//! predicted probabilities as buys and the bottom decile as sells.

use super::AgentError;
use crate::data::AssetId;
use crate::dates::Month;
use crate::signals::{Action, SignalSet};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

const IRLS_TOLERANCE: f64 = 1e-8;
const IRLS_MAX_ITERATIONS: usize = 100;
const MIN_TRAIN_ROWS: usize = 30;

/// One training observation: feature values and the 1{next-month return > 0} label.
#[derive(Debug, Clone)]
pub struct TrainRow {
    pub features: Vec<f64>,
    pub label: bool,
}

/// Fitted coefficients, intercept first.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub coefficients: DVector<f64>,
    pub iterations: usize,
}

impl LogisticFit {
    /// Predicted probability for a feature vector (without intercept entry).
    pub fn predict(&self, features: &[f64]) -> f64 {
        let mut eta = self.coefficients[0];
        for (j, x) in features.iter().enumerate() {
            eta += self.coefficients[j + 1] * x;
        }
        logistic(eta)
    }
}

fn logistic(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

/// Maximum-likelihood logistic fit by IRLS with an intercept column.
/// Converges when the largest coefficient step is below 1e-8; gives up
/// after 100 iterations with the step-size trace attached.
pub fn fit_logistic(rows: &[TrainRow]) -> Result<LogisticFit, AgentError> {
    if rows.len() < MIN_TRAIN_ROWS {
        return Err(AgentError::TooFewObservations {
            required: MIN_TRAIN_ROWS,
            actual: rows.len(),
        });
    }
    let positives = rows.iter().filter(|r| r.label).count();
    if positives == 0 || positives == rows.len() {
        return Err(AgentError::PerfectSeparation(format!(
            "all {} labels are {}",
            rows.len(),
            positives != 0
        )));
    }
    let k = rows[0].features.len();
    let n = rows.len();
    let mut x = DMatrix::zeros(n, k + 1);
    let mut y = DVector::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        x[(i, 0)] = 1.0;
        for j in 0..k {
            x[(i, j + 1)] = row.features[j];
        }
        y[i] = if row.label { 1.0 } else { 0.0 };
    }

    let mut beta = DVector::zeros(k + 1);
    let mut trace = Vec::new();
    for iteration in 1..=IRLS_MAX_ITERATIONS {
        let eta = &x * &beta;
        let mu = eta.map(logistic);
        let w = mu.map(|m| m * (1.0 - m));

        // X' W X and X' (y - mu) assembled directly.
        let mut xtwx = DMatrix::zeros(k + 1, k + 1);
        let mut score = DVector::zeros(k + 1);
        for i in 0..n {
            let xi = x.row(i);
            let wi = w[i];
            for a in 0..k + 1 {
                score[a] += xi[a] * (y[i] - mu[i]);
                for b in a..k + 1 {
                    xtwx[(a, b)] += wi * xi[a] * xi[b];
                }
            }
        }
        for a in 0..k + 1 {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }

        let step = xtwx.lu().solve(&score).ok_or_else(|| {
            AgentError::PerfectSeparation(
                "weighted information matrix is singular".to_string(),
            )
        })?;
        beta += &step;
        let max_step = step.amax();
        trace.push(max_step);
        if max_step < IRLS_TOLERANCE {
            return Ok(LogisticFit {
                coefficients: beta,
                iterations: iteration,
            });
        }
        // Divergence towards a separating hyperplane shows up as unbounded
        // coefficients with near-0/1 fitted probabilities.
        if beta.amax() > 1e3 {
            return Err(AgentError::PerfectSeparation(format!(
                "coefficients diverged (|beta|_max = {:.1e} after {iteration} iterations)",
                beta.amax()
            )));
        }
    }
    Err(AgentError::NonConvergence {
        iterations: IRLS_MAX_ITERATIONS,
        trace,
    })
}

/// Fit on the training window, score `cross_section` at `date`, and
/// assign buys to the top decile of probabilities, sells to the bottom
/// decile, holds elsewhere. Probability ties break by asset identifier.
pub fn logistic_agent(
    train: &[TrainRow],
    feature_names: &[String],
    cross_section: &BTreeMap<AssetId, BTreeMap<String, f64>>,
    date: Month,
) -> Result<SignalSet, AgentError> {
    let fit = fit_logistic(train)?;
    let mut scored: Vec<(AssetId, f64)> = Vec::with_capacity(cross_section.len());
    for (asset, row) in cross_section {
        let mut features = Vec::with_capacity(feature_names.len());
        for name in feature_names {
            let v = row.get(name).ok_or_else(|| AgentError::MissingFeature {
                feature: name.clone(),
                asset: asset.clone(),
                date,
            })?;
            features.push(*v);
        }
        scored.push((asset.clone(), fit.predict(&features)));
    }
    // Descending probability, identifier as the tie-break.
    scored.sort_by(|(a, pa), (b, pb)| {
        pb.partial_cmp(pa)
            .expect("finite probabilities")
            .then_with(|| a.cmp(b))
    });

    let m = scored.len();
    let mut leg = (m / 10).max(1).min(m / 2);
    if m < 2 {
        leg = 0;
    }
    let mut set = SignalSet::new(date);
    for (a, _) in scored.iter().take(leg) {
        set.set(a.clone(), Action::Buy);
    }
    for (a, _) in scored.iter().rev().take(leg) {
        set.set(a.clone(), Action::Sell);
    }
    Ok(set)
}
