//! Deep-learning factor estimator: a feed-forward network maps observable
//! factors to expected returns, the fitted covariance and the thresholded
//! residual covariance recombine through the Woodbury identity.
//!
//! The network is a shared trunk with one output per asset (a per-asset
//! mode trains independent single-output networks instead). Training is
//! mini-batch gradient descent with momentum from a fixed named RNG
//! stream, so estimates are bit-reproducible.

use super::poet::invert_thresholded;
use super::{lu_inverse, Diagnostics, EstimatorError, Method, PrecisionEstimate};
use crate::data::ReturnsMatrix;
use crate::precision::FactorPanel;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;

/// Network and training hyperparameters. None of these come from a
/// published recipe; they are desk defaults and every one is configurable.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DeepConfig {
    pub hidden_layers: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    /// C in the residual threshold.
    pub threshold_scale: f64,
    /// Smoothness exponent beta in the threshold rate.
    pub smoothness: f64,
    pub seed: u64,
    /// Train one single-output network per asset instead of a shared trunk.
    pub per_asset: bool,
}

impl Default for DeepConfig {
    fn default() -> Self {
        DeepConfig {
            hidden_layers: vec![32, 32],
            epochs: 500,
            learning_rate: 1e-3,
            batch_size: 32,
            momentum: 0.9,
            threshold_scale: 0.5,
            smoothness: 2.0,
            seed: 0,
            per_asset: false,
        }
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn elu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

struct Layer {
    /// out x in.
    weights: DMatrix<f64>,
    bias: DVector<f64>,
}

/// A trained factor network with its input/output standardization.
pub struct FactorNetwork {
    layers: Vec<Layer>,
    input_mean: DVector<f64>,
    input_scale: DVector<f64>,
    output_mean: DVector<f64>,
    output_scale: DVector<f64>,
    pub final_loss: f64,
}

impl FactorNetwork {
    /// Predictions for a batch of factor rows (n x K in, n x p out).
    pub fn predict(&self, inputs: &DMatrix<f64>) -> DMatrix<f64> {
        let z = standardize_with(inputs, &self.input_mean, &self.input_scale);
        let mut activation = z;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut pre = &activation * layer.weights.transpose();
            for r in 0..pre.nrows() {
                for c in 0..pre.ncols() {
                    pre[(r, c)] += layer.bias[c];
                }
            }
            activation = if i + 1 < self.layers.len() {
                pre.map(elu)
            } else {
                pre
            };
        }
        // Back to return units.
        for r in 0..activation.nrows() {
            for c in 0..activation.ncols() {
                activation[(r, c)] =
                    activation[(r, c)] * self.output_scale[c] + self.output_mean[c];
            }
        }
        activation
    }
}

fn column_stats(m: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = m.nrows() as f64;
    let mean = DVector::from_fn(m.ncols(), |j, _| m.column(j).sum() / n);
    let scale = DVector::from_fn(m.ncols(), |j, _| {
        let sd = (m.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
        if sd > 1e-12 {
            sd
        } else {
            1.0
        }
    });
    (mean, scale)
}

fn standardize_with(m: &DMatrix<f64>, mean: &DVector<f64>, scale: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| (m[(r, c)] - mean[c]) / scale[c])
}

/// Fit `targets ~ g(inputs)` by seeded mini-batch gradient descent on the
/// mean squared error. `inputs` is n x K, `targets` n x p.
pub fn train_factor_network(
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    config: &DeepConfig,
    rng: &mut ChaCha12Rng,
) -> Result<FactorNetwork, EstimatorError> {
    let n = inputs.nrows();
    let (input_mean, input_scale) = column_stats(inputs);
    let (output_mean, output_scale) = column_stats(targets);
    let x = standardize_with(inputs, &input_mean, &input_scale);
    let y = standardize_with(targets, &output_mean, &output_scale);

    let mut sizes = vec![inputs.ncols()];
    sizes.extend_from_slice(&config.hidden_layers);
    sizes.push(targets.ncols());
    let mut layers: Vec<Layer> = Vec::with_capacity(sizes.len() - 1);
    for w in sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let sd = (2.0 / fan_in as f64).sqrt();
        layers.push(Layer {
            weights: DMatrix::from_fn(fan_out, fan_in, |_, _| {
                sd * crate::rng::normal(rng)
            }),
            bias: DVector::zeros(fan_out),
        });
    }
    let mut velocity: Vec<(DMatrix<f64>, DVector<f64>)> = layers
        .iter()
        .map(|l| (DMatrix::zeros(l.weights.nrows(), l.weights.ncols()), DVector::zeros(l.bias.len())))
        .collect();

    let batch = config.batch_size.max(1).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut final_loss = f64::NAN;
    for epoch in 0..config.epochs.max(1) {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(batch) {
            let b = chunk.len();
            let mut xb = DMatrix::zeros(b, x.ncols());
            let mut yb = DMatrix::zeros(b, y.ncols());
            for (r, &i) in chunk.iter().enumerate() {
                xb.set_row(r, &x.row(i));
                yb.set_row(r, &y.row(i));
            }

            // Forward pass keeping pre-activations for the backward pass.
            let mut activations = vec![xb];
            let mut pre_activations = Vec::with_capacity(layers.len());
            for (i, layer) in layers.iter().enumerate() {
                let mut pre = activations.last().unwrap() * layer.weights.transpose();
                for r in 0..pre.nrows() {
                    for c in 0..pre.ncols() {
                        pre[(r, c)] += layer.bias[c];
                    }
                }
                let act = if i + 1 < layers.len() {
                    pre.map(elu)
                } else {
                    pre.clone()
                };
                pre_activations.push(pre);
                activations.push(act);
            }
            let output = activations.last().unwrap();
            let error = output - &yb;
            let loss = error.iter().map(|e| e * e).sum::<f64>() / (b * y.ncols()) as f64;
            if !loss.is_finite() {
                return Err(EstimatorError::TrainingDiverged { epoch, loss });
            }
            epoch_loss += loss;
            batches += 1.0;

            // Backward pass.
            let mut delta = error * (2.0 / (b * y.ncols()) as f64);
            for i in (0..layers.len()).rev() {
                let grad_w = delta.transpose() * &activations[i];
                let grad_b = DVector::from_fn(delta.ncols(), |c, _| delta.column(c).sum());
                if i > 0 {
                    let upstream = &delta * &layers[i].weights;
                    delta = DMatrix::from_fn(upstream.nrows(), upstream.ncols(), |r, c| {
                        upstream[(r, c)] * elu_derivative(pre_activations[i - 1][(r, c)])
                    });
                }
                let (vw, vb) = &mut velocity[i];
                *vw = &*vw * config.momentum - grad_w * config.learning_rate;
                *vb = &*vb * config.momentum - grad_b * config.learning_rate;
                layers[i].weights += &*vw;
                layers[i].bias += &*vb;
            }
        }
        final_loss = epoch_loss / batches;
    }

    Ok(FactorNetwork {
        layers,
        input_mean,
        input_scale,
        output_mean,
        output_scale,
        final_loss,
    })
}

/// Woodbury recombination for the nonlinear factor split
/// `Su - Su Sigma_g (I_p + Su Sigma_g)^{-1} Su`, `Su` the inverse of the
/// thresholded residual covariance.
pub fn deep_reconstruct(
    sigma_u_th: &DMatrix<f64>,
    sigma_g: &DMatrix<f64>,
    diagonal_loading: bool,
) -> Result<(DMatrix<f64>, Option<f64>), EstimatorError> {
    let (su, loading) = invert_thresholded(sigma_u_th, diagonal_loading)?;
    let p = su.nrows();
    let bracket = DMatrix::identity(p, p) + &su * sigma_g;
    let bracket_inv = lu_inverse(&bracket, "deep woodbury bracket")?;
    let gamma = &su - &su * sigma_g * bracket_inv * &su;
    Ok((gamma, loading))
}

/// Deep-learning factor estimate from a return window and matching
/// observable factors.
pub fn deep_factor_precision(
    window: &ReturnsMatrix,
    factors: &FactorPanel,
    config: &DeepConfig,
    diagonal_loading: bool,
) -> Result<PrecisionEstimate, EstimatorError> {
    let aligned = if factors.dates == window.dates {
        factors.clone()
    } else {
        factors.select_dates(&window.dates)?
    };
    let n = window.n_obs();
    let p = window.n_assets();
    if n < 50 {
        return Err(EstimatorError::TooFewObservations {
            context: "deep factor",
            required: 50,
            actual: n,
        });
    }
    if p < 2 {
        return Err(EstimatorError::TooFewAssets {
            context: "deep factor",
            required: 2,
            actual: p,
        });
    }
    let k = aligned.n_factors();

    let fitted = if config.per_asset {
        let mut fitted = DMatrix::zeros(n, p);
        for j in 0..p {
            let mut rng = crate::rng::stream_rng(
                config.seed,
                &format!("precision/deep/asset/{}", window.assets[j]),
            );
            let target = DMatrix::from_column_slice(n, 1, window.values.column(j).as_slice());
            let net = train_factor_network(&aligned.values, &target, config, &mut rng)?;
            fitted.set_column(j, &net.predict(&aligned.values).column(0));
        }
        fitted
    } else {
        let mut rng = crate::rng::stream_rng(config.seed, "precision/deep/shared");
        let net = train_factor_network(&aligned.values, &window.values, config, &mut rng)?;
        net.predict(&aligned.values)
    };

    // Sigma_g from centered fitted values.
    let g_mean = DVector::from_fn(p, |j, _| fitted.column(j).sum() / n as f64);
    let centered = DMatrix::from_fn(n, p, |t, j| fitted[(t, j)] - g_mean[j]);
    let sigma_g = centered.transpose() * &centered / n as f64;

    // Residual covariance with the rate-based hard threshold.
    let residuals = &window.values - &fitted;
    let sigma_u = residuals.transpose() * &residuals / n as f64;
    let beta = config.smoothness;
    let rate_sqrt = (n as f64).powf(-beta / (2.0 * (beta + k as f64))) * (n as f64).ln().powi(4);
    let rate = rate_sqrt * rate_sqrt;
    let mut sigma_u_th = sigma_u.clone();
    let mut zeroed = 0usize;
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let mut spread = 0.0;
            for t in 0..n {
                spread += (residuals[(t, i)] * residuals[(t, j)] - sigma_u[(i, j)]).abs();
            }
            let tau = config.threshold_scale * rate * spread;
            if sigma_u[(i, j)].abs() < tau {
                sigma_u_th[(i, j)] = 0.0;
                zeroed += 1;
            }
        }
    }

    let (gamma, loading) = deep_reconstruct(&sigma_u_th, &sigma_g, diagonal_loading)?;
    let mut diagnostics = Diagnostics::default();
    diagnostics.scalars.insert("n_factors".into(), k as f64);
    diagnostics.scalars.insert("thresholded_zeroed".into(), zeroed as f64);
    if let Some(eps) = loading {
        diagnostics.scalars.insert("diagonal_loading".into(), eps);
    }
    PrecisionEstimate::new(window.assets.clone(), gamma, Method::DeepFactor, diagnostics)
}
