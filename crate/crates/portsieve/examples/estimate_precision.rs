//! All five precision estimators on one simulated factor window, with
//! their diagnostics and accuracy against the known truth.
//!
//! ```bash
//! cargo run --release --example estimate_precision
//! ```

use nalgebra::{DMatrix, DVector};
use portsieve::data::{AssetId, ReturnsMatrix};
use portsieve::precision::{
    estimate_precision, EstimateOptions, FactorPanel, Method,
};
use portsieve::rng::{normal, stream_rng};
use portsieve::Month;

fn main() {
    println!("=== Precision estimators on a known factor market ===\n");
    let p = 12;
    let n = 360;
    let k = 2;
    let seed = 2024;

    // Truth: two observable factors plus diagonal noise.
    let mut rng = stream_rng(seed, "example/estimate");
    let loadings = DMatrix::from_fn(p, k, |_, f| {
        if f == 0 {
            0.8 + 0.3 * normal(&mut rng)
        } else {
            0.4 * normal(&mut rng)
        }
    });
    let factor_sds = [0.04, 0.02];
    let idio_sd = DVector::from_fn(p, |_, _| 0.02 + 0.03 * rand::Rng::gen::<f64>(&mut rng));
    let mut sigma = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            for f in 0..k {
                sigma[(i, j)] += loadings[(i, f)] * loadings[(j, f)] * factor_sds[f] * factor_sds[f];
            }
        }
        sigma[(i, i)] += idio_sd[i] * idio_sd[i];
    }
    let gamma_true = sigma.clone().try_inverse().unwrap();

    // Sample draws.
    let start: Month = "1990-01".parse().unwrap();
    let dates: Vec<Month> = (0..n).map(|t| start.add_months(t as i32)).collect();
    let mut factors = DMatrix::zeros(n, k);
    let mut values = DMatrix::zeros(n, p);
    for t in 0..n {
        for f in 0..k {
            factors[(t, f)] = factor_sds[f] * normal(&mut rng);
        }
        for j in 0..p {
            let mut r = idio_sd[j] * normal(&mut rng);
            for f in 0..k {
                r += loadings[(j, f)] * factors[(t, f)];
            }
            values[(t, j)] = r;
        }
    }
    let window = ReturnsMatrix {
        assets: (0..p).map(|j| AssetId::new(format!("A{j:02}"))).collect(),
        dates: dates.clone(),
        values,
    };
    let panel = FactorPanel {
        dates,
        values: factors,
    };

    let mut options = EstimateOptions {
        max_factors: 3,
        ..EstimateOptions::default()
    };
    options.deep.epochs = 200;

    println!(
        "{:<16} {:>12} {:>12} {:>14} {:>10}",
        "method", "min eig", "condition", "rel.frob.err", "extras"
    );
    for method in Method::ALL {
        let estimate =
            estimate_precision(method, &window, Some(&panel), &options).expect("estimate");
        let err = (&estimate.gamma - &gamma_true).norm() / gamma_true.norm();
        let extras = match method {
            Method::Poet => format!("K={}", estimate.diagnostics.scalars["k_hat"]),
            Method::Nodewise | Method::ResidualNodewise => format!(
                "median lambda {:.1e}",
                median(&estimate.diagnostics.series["selected_lambda"])
            ),
            Method::DeepFactor => format!(
                "zeroed {}",
                estimate.diagnostics.scalars["thresholded_zeroed"]
            ),
            Method::Nls => format!(
                "c = {:.2}",
                estimate.diagnostics.scalars["concentration"]
            ),
        };
        println!(
            "{:<16} {:>12.4} {:>12.1} {:>14.3} {:>10}",
            estimate.method.label(),
            estimate.diagnostics.min_eigenvalue,
            estimate.diagnostics.condition_number,
            err,
            extras
        );
    }
    println!("\nrelative Frobenius error measured against the true precision matrix");
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted[sorted.len() / 2]
}
