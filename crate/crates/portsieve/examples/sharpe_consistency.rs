//! Screened Sharpe-ratio consistency experiment: the squared-ratio error
//! shrinks along the sample-size grid under sensible screening and stays
//! large under a random screen.
//!
//! ```bash
//! cargo run --release --example sharpe_consistency
//! ```

use portsieve::theory::{
    sensible_screen, simulate_market, target_sr, sharpe_consistency_experiment, MarketConfig,
    ScreeningMode, TheoryEstimator, TheorySpec,
};

fn print_table(label: &str, table: &portsieve::theory::ConvergenceTable) {
    println!("{label}:");
    println!("  {:>6} {:>4} {:>9} {:>9} {:>9}", "n", "p*", "q10", "q50", "q90");
    for point in &table.points {
        println!(
            "  {:>6} {:>4} {:>9.4} {:>9.4} {:>9.4}",
            point.n, point.p_star, point.q10, point.q50, point.q90
        );
    }
    println!("  medians weakly decreasing: {}\n", table.converged);
}

fn main() {
    println!("=== Screened Sharpe-ratio consistency ===\n");

    // One concrete market: the optimal set and the screen around it.
    let market_config = MarketConfig::default();
    let (market, _sample) = simulate_market(12, 4, &market_config, 60, 99).unwrap();
    println!(
        "universe of {} assets, optimal set {:?} (target SR {:.3})",
        market.p(),
        market.optimal_assets(),
        target_sr(&market).unwrap()
    );
    let over = sensible_screen(&market, 6, 1).unwrap();
    let under = sensible_screen(&market, 2, 1).unwrap();
    println!(
        "sensible screen, p_hat 6 >= p*: selects {:?} (superset of the optimal set)",
        over.selected
    );
    println!(
        "sensible screen, p_hat 2 <  p*: selects {:?} (inside the optimal set)\n",
        under.selected
    );

    // Convergence of |SR^2 ratio - 1| with the nodewise estimator.
    let spec = TheorySpec {
        grid: vec![120, 360, 1080],
        replications: 100,
        seed: 7,
        estimator: TheoryEstimator::Nodewise,
        screening: ScreeningMode::Sensible,
        size_error: 2,
        universe_multiple: 2,
        market: MarketConfig {
            n_factors: 3,
            factor_variances: vec![0.0004, 0.000225, 0.0001],
            error_variance_range: (0.0006, 0.0016),
            mean_range: (0.005, 0.025),
        },
    };
    let sensible = sharpe_consistency_experiment(&spec).unwrap();
    print_table("sensible screening, nodewise estimator", &sensible);

    let contrast = sharpe_consistency_experiment(&TheorySpec {
        screening: ScreeningMode::Random,
        ..spec
    })
    .unwrap();
    print_table("random screening (non-sensible contrast)", &contrast);

    let s = sensible.points.last().unwrap().q50;
    let r = contrast.points.last().unwrap().q50;
    println!("terminal medians: sensible {s:.4} vs random {r:.4} ({:.1}x)", r / s);
}
