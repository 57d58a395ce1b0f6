//! Closed-form portfolio weights for the three objectives, with their
//! defining identities checked numerically.
//!
//! ```bash
//! cargo run --example closed_form_weights
//! ```

use nalgebra::{DMatrix, DVector};
use portsieve::data::AssetId;
use portsieve::portfolio::{gmv_weights, msr_weights, mv_weights, MeanEstimate};
use portsieve::precision::{Diagnostics, Method, PrecisionEstimate};
use portsieve::rng::stream_rng;
use rand::Rng;

fn main() {
    println!("=== Closed-form weights ===\n");
    let p = 5;
    let mut rng = stream_rng(7, "example/weights");
    let a = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
    let gamma = &a * a.transpose() + DMatrix::identity(p, p) * 2.5;
    let sigma = gamma.clone().try_inverse().unwrap();
    let mu = DVector::from_fn(p, |j, _| 0.006 + 0.004 * j as f64);

    let assets: Vec<AssetId> = (0..p).map(|j| AssetId::new(format!("A{j}"))).collect();
    let estimate =
        PrecisionEstimate::new(assets.clone(), gamma, Method::Nls, Diagnostics::default())
            .unwrap();
    let mean = MeanEstimate {
        assets,
        mu: mu.clone(),
    };

    let gmv = gmv_weights(&estimate).unwrap();
    let rho = 0.01;
    let mv = mv_weights(&estimate, &mean, rho).unwrap();
    let msr = msr_weights(&estimate, &mean).unwrap();

    println!("{:<6} {:>10} {:>10} {:>10}", "asset", "GMV", "MV", "MSR");
    for j in 0..p {
        println!(
            "{:<6} {:>10.4} {:>10.4} {:>10.4}",
            gmv.assets[j], gmv.weights[j], mv.weights[j], msr.weights[j]
        );
    }

    let variance = |w: &DVector<f64>| (&sigma * w).dot(w);
    let sharpe = |w: &DVector<f64>| w.dot(&mu) / variance(w).sqrt();
    println!("\nbudget sums: {:.12} / {:.12} / {:.12}",
        gmv.weights.sum(), mv.weights.sum(), msr.weights.sum());
    println!("gmv monthly vol {:.4}", variance(&gmv.weights).sqrt());
    println!(
        "mv hits the target return: w'mu = {:.6} (rho = {rho})",
        mv.weights.dot(&mu)
    );
    println!(
        "sharpe ratios: gmv {:.3}, mv {:.3}, msr {:.3} (msr is the max)",
        sharpe(&gmv.weights),
        sharpe(&mv.weights),
        sharpe(&msr.weights)
    );

    // Spot-check optimality against random fully-invested books.
    let mut best_random = f64::MIN;
    for _ in 0..50_000 {
        let mut w: DVector<f64> = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..2.0));
        let s = w.sum();
        if s.abs() < 1e-6 {
            continue;
        }
        w /= s;
        best_random = best_random.max(sharpe(&w));
    }
    println!(
        "best of 50k random books: {:.3} <= msr {:.3}",
        best_random,
        sharpe(&msr.weights)
    );
}
