//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measurements. Tolerances are pinned in the asserts.

mod common;

use nalgebra::{DMatrix, DVector};
use portsieve::backtest::{net_return, HoldingsState};
use portsieve::data::{AssetId, ReturnsMatrix};
use portsieve::portfolio::{gmv_weights, msr_weights, mv_weights, MeanEstimate, WeightVector};
use portsieve::precision::{
    bai_ng_factor_count, deep_reconstruct, nls_precision, nodewise_precision_with_grid,
    poet_reconstruct, rnw_reconstruct, Diagnostics, Method, PrecisionEstimate,
};
use portsieve::rng::{normal, stream_rng};
use portsieve::rules::{evaluate_rule, parse_rule, CmpOp, RuleExpr};
use portsieve::signals::{Action, SignalSet};
use portsieve::theory::{
    sharpe_consistency_experiment, MarketConfig, ScreeningMode, TheoryEstimator, TheorySpec,
};
use portsieve::Month;
use rand::Rng;
use std::collections::BTreeMap;
use std::time::Instant;

fn assets(p: usize) -> Vec<AssetId> {
    (0..p).map(|j| AssetId::new(format!("A{j:03}"))).collect()
}

fn random_spd(p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(p, p) * (0.5 * p as f64)
}

fn estimate_from(gamma: DMatrix<f64>) -> PrecisionEstimate {
    PrecisionEstimate::new(assets(gamma.nrows()), gamma, Method::Nls, Diagnostics::default())
        .unwrap()
}

/// Equality-constrained quadratic minimizer: solve the KKT system by LU.
/// `constraints` rows are (a_k, b_k) for a_k'w = b_k.
fn kkt_minimizer(sigma: &DMatrix<f64>, constraints: &[(DVector<f64>, f64)]) -> DVector<f64> {
    let p = sigma.nrows();
    let m = constraints.len();
    let mut kkt = DMatrix::zeros(p + m, p + m);
    let mut rhs = DVector::zeros(p + m);
    for i in 0..p {
        for j in 0..p {
            kkt[(i, j)] = 2.0 * sigma[(i, j)];
        }
    }
    for (k, (a, b)) in constraints.iter().enumerate() {
        for i in 0..p {
            kkt[(i, p + k)] = a[i];
            kkt[(p + k, i)] = a[i];
        }
        rhs[p + k] = *b;
    }
    let solution = kkt.lu().solve(&rhs).expect("KKT system solvable");
    solution.rows(0, p).into_owned()
}

/// Ratio optimizer: maximize w'mu / sqrt(w'Sigma w) over the sum-to-one
/// affine set by projected gradient ascent with backtracking.
fn sharpe_ascent(sigma: &DMatrix<f64>, mu: &DVector<f64>) -> DVector<f64> {
    let p = sigma.nrows();
    let w0 = DVector::from_element(p, 1.0 / p as f64);
    let basis = DMatrix::from_fn(p, p - 1, |i, j| {
        if i == j {
            1.0
        } else if i == p - 1 {
            -1.0
        } else {
            0.0
        }
    });
    let eval = |v: &DVector<f64>| -> (f64, DVector<f64>) {
        let w = &w0 + &basis * v;
        let sw = sigma * &w;
        let a = w.dot(mu);
        let b = w.dot(&sw);
        let value = a / b.sqrt();
        let grad_w = mu / b.sqrt() - sw * (a / b.powf(1.5));
        (value, basis.transpose() * grad_w)
    };
    let mut v: DVector<f64> = DVector::zeros(p - 1);
    let mut step = 1.0;
    for _ in 0..200_000 {
        let (value, grad) = eval(&v);
        if grad.amax() < 1e-13 {
            break;
        }
        let mut advanced = false;
        while step > 1e-18 {
            let candidate = &v + &grad * step;
            let (cand_value, _) = eval(&candidate);
            if cand_value > value {
                v = candidate;
                step *= 1.5;
                advanced = true;
                break;
            }
            step *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    &w0 + &basis * v
}

/// Closed-form weights vs. numeric oracles on 100 random 5-asset books.
#[test]
fn acceptance_closed_form_weights_vs_numeric_oracle() {
    let started = Instant::now();
    let mut rng = stream_rng(101, "acceptance/weights");
    let p = 5;
    let ones = DVector::from_element(p, 1.0);
    let mut worst_gmv = 0.0f64;
    let mut worst_mv = 0.0f64;
    let mut worst_msr = 0.0f64;
    for _ in 0..100 {
        let gamma = random_spd(p, &mut rng);
        let sigma = gamma.clone().try_inverse().unwrap();
        let mu = DVector::from_fn(p, |_, _| rng.gen_range(0.005..0.03));
        let estimate = estimate_from(gamma.clone());
        let mean = MeanEstimate {
            assets: assets(p),
            mu: mu.clone(),
        };

        let gmv = gmv_weights(&estimate).unwrap();
        let oracle = kkt_minimizer(&sigma, &[(ones.clone(), 1.0)]);
        worst_gmv = worst_gmv.max((&gmv.weights - &oracle).amax());

        let rho = 0.012;
        let mv = mv_weights(&estimate, &mean, rho).unwrap();
        let oracle = kkt_minimizer(&sigma, &[(ones.clone(), 1.0), (mu.clone(), rho)]);
        worst_mv = worst_mv.max((&mv.weights - &oracle).amax());

        let msr = msr_weights(&estimate, &mean).unwrap();
        let oracle = sharpe_ascent(&sigma, &mu);
        worst_msr = worst_msr.max((&msr.weights - &oracle).amax());
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(worst_gmv < 1e-6, "gmv max-abs gap {worst_gmv:.2e}");
    assert!(worst_mv < 1e-6, "mv max-abs gap {worst_mv:.2e}");
    assert!(worst_msr < 1e-6, "msr max-abs gap {worst_msr:.2e}");
    assert!(elapsed < 10.0, "runtime {elapsed:.1}s exceeds 10s");
    println!(
        "ACCEPTANCE PASS closed-form weights vs numeric oracle: max gaps gmv {worst_gmv:.2e}, mv {worst_mv:.2e}, msr {worst_msr:.2e} in {elapsed:.1}s"
    );
}

/// Woodbury reconstruction identities on synthetic well-conditioned parts.
#[test]
fn acceptance_woodbury_identities() {
    let started = Instant::now();
    let mut rng = stream_rng(102, "acceptance/woodbury");
    let mut worst = 0.0f64;
    for _ in 0..25 {
        let p = rng.gen_range(4..10);
        let k = rng.gen_range(1..4);

        // Residual nodewise: gamma == inv(B Sf B' + Omega^{-1}).
        let omega = random_spd(p, &mut rng);
        let loadings = DMatrix::from_fn(p, k, |_, _| normal(&mut rng));
        let sigma_f = random_spd(k, &mut rng) * 0.1;
        let gamma = rnw_reconstruct(&omega, &loadings, &sigma_f).unwrap();
        let direct = (&loadings * &sigma_f * loadings.transpose()
            + omega.try_inverse().unwrap())
        .try_inverse()
        .unwrap();
        worst = worst.max((&gamma - direct).amax());

        // POET: gamma (B B' + Su) == I.
        let sigma_u = random_spd(p, &mut rng) * 0.2;
        let (gamma, _) = poet_reconstruct(&sigma_u, &loadings, false).unwrap();
        let identity_gap = (&gamma * (&loadings * loadings.transpose() + &sigma_u)
            - DMatrix::identity(p, p))
        .amax();
        worst = worst.max(identity_gap);

        // Deep: gamma (Sigma_g + Su) == I.
        let half = DMatrix::from_fn(p, k, |_, _| normal(&mut rng));
        let sigma_g = &half * half.transpose();
        let (gamma, _) = deep_reconstruct(&sigma_u, &sigma_g, false).unwrap();
        let identity_gap =
            (&gamma * (&sigma_g + &sigma_u) - DMatrix::identity(p, p)).amax();
        worst = worst.max(identity_gap);
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(worst < 1e-8, "worst identity gap {worst:.2e}");
    assert!(elapsed < 5.0, "runtime {elapsed:.1}s exceeds 5s");
    println!("ACCEPTANCE PASS woodbury identities: worst gap {worst:.2e} in {elapsed:.1}s");
}

fn gaussian_window(n: usize, chol: &DMatrix<f64>, seed: u64) -> ReturnsMatrix {
    let p = chol.nrows();
    let mut rng = stream_rng(seed, "acceptance/nodewise");
    let z = DMatrix::from_fn(n, p, |_, _| normal(&mut rng));
    let start: Month = "2000-01".parse().unwrap();
    ReturnsMatrix {
        assets: assets(p),
        dates: (0..n).map(|t| start.add_months(t as i32)).collect(),
        values: z * chol.transpose(),
    }
}

/// Nodewise at vanishing penalty vs. the direct sample-covariance inverse.
#[test]
fn acceptance_nodewise_oracle() {
    let started = Instant::now();
    // p = 3, n = 2000: relative Frobenius error below 5%.
    let chol = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.3, 0.9, 0.0, -0.2, 0.4, 0.85]);
    let window = gaussian_window(2000, &chol, 103);
    let est = nodewise_precision_with_grid(&window, Some(&[0.0])).unwrap();
    let demeaned = window.demeaned();
    let sample_inverse = (demeaned.transpose() * &demeaned / 2000.0)
        .try_inverse()
        .unwrap();
    let frob_gap = (&est.gamma - &sample_inverse).norm() / sample_inverse.norm();
    assert!(frob_gap < 0.05, "relative Frobenius gap {frob_gap:.4}");

    // Bivariate analytic precision within 10% at n = 5000.
    let rho = 0.5f64;
    let chol2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, rho, (1.0 - rho * rho).sqrt()]);
    let window2 = gaussian_window(5000, &chol2, 104);
    let est2 = nodewise_precision_with_grid(&window2, None).unwrap();
    let scale = 1.0 / (1.0 - rho * rho);
    let truth = DMatrix::from_row_slice(2, 2, &[scale, -rho * scale, -rho * scale, scale]);
    let mut worst_rel = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            worst_rel =
                worst_rel.max((est2.gamma[(i, j)] - truth[(i, j)]).abs() / truth[(i, j)].abs());
        }
    }
    assert!(worst_rel < 0.10, "bivariate relative error {worst_rel:.4}");
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "runtime {elapsed:.1}s exceeds 30s");
    println!(
        "ACCEPTANCE PASS nodewise oracle: frobenius {frob_gap:.4}, bivariate {worst_rel:.4} in {elapsed:.1}s"
    );
}

/// Bai-Ng factor-count recovery across 50 seeded 3-factor markets.
#[test]
fn acceptance_factor_count_recovery() {
    let started = Instant::now();
    let (p, n, r) = (100usize, 200usize, 3usize);
    let mut hits = 0;
    for seed in 0..50u64 {
        let mut rng = stream_rng(seed, "acceptance/bai-ng");
        let loadings = DMatrix::from_fn(p, r, |_, _| normal(&mut rng));
        let factors = DMatrix::from_fn(n, r, |_, _| normal(&mut rng));
        let noise = DMatrix::from_fn(n, p, |_, _| 0.3 * normal(&mut rng));
        let data = &factors * loadings.transpose() + noise;
        let y = data.transpose();
        let (k, _) = bai_ng_factor_count(&y, 8).unwrap();
        if k == 3 {
            hits += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(hits >= 45, "K=3 recovered on {hits}/50 seeds");
    assert!(elapsed < 120.0, "runtime {elapsed:.1}s exceeds 2min");
    println!("ACCEPTANCE PASS factor-count recovery: {hits}/50 seeds in {elapsed:.1}s");
}

/// Nonlinear shrinkage sanity: eigenvector preservation, positive
/// definiteness including p > n, and identity-truth eigenvalue accuracy.
#[test]
fn acceptance_nls_sanity() {
    let started = Instant::now();

    // Eigenvector preservation to 1e-10.
    let window = gaussian_window(300, &DMatrix::identity(15, 15), 105);
    let est = nls_precision(&window).unwrap();
    let sample = window.values.transpose() * &window.values / window.n_obs() as f64;
    let eig = sample.symmetric_eigen();
    let rotated = eig.eigenvectors.transpose() * &est.gamma * &eig.eigenvectors;
    let mut off = 0.0f64;
    for i in 0..15 {
        for j in 0..15 {
            if i != j {
                off = off.max(rotated[(i, j)].abs());
            }
        }
    }
    assert!(off < 1e-10, "eigenvector preservation gap {off:.2e}");

    // Positive definite on every seed, including p = 100 > n = 50.
    let mut pd = 0;
    for seed in 0..50u64 {
        let (n, p) = if seed % 2 == 0 { (50, 100) } else { (150, 40) };
        let mut rng = stream_rng(seed, "acceptance/nls-pd");
        let start: Month = "2000-01".parse().unwrap();
        let window = ReturnsMatrix {
            assets: assets(p),
            dates: (0..n).map(|t| start.add_months(t as i32)).collect(),
            values: DMatrix::from_fn(n, p, |_, _| 0.05 * normal(&mut rng)),
        };
        let est = nls_precision(&window).unwrap();
        if est.diagnostics.min_eigenvalue > 0.0 && est.diagnostics.condition_number.is_finite() {
            pd += 1;
        }
    }
    assert_eq!(pd, 50, "positive definite on {pd}/50 seeds");

    // Identity truth at p = 2, n = 10^4: shrunk eigenvalues within 5% of 1.
    let window = gaussian_window(10_000, &DMatrix::identity(2, 2), 106);
    let est = nls_precision(&window).unwrap();
    let mut worst = 0.0f64;
    for phi in &est.diagnostics.series["shrunk_eigenvalues"] {
        worst = worst.max((phi - 1.0).abs());
    }
    assert!(worst < 0.05, "identity-truth eigenvalue error {worst:.4}");
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "runtime {elapsed:.1}s exceeds 2min");
    println!(
        "ACCEPTANCE PASS nls sanity: preservation {off:.1e}, pd {pd}/50, identity error {worst:.4} in {elapsed:.1}s"
    );
}

fn acceptance_market() -> MarketConfig {
    MarketConfig {
        n_factors: 3,
        factor_variances: vec![0.0004, 0.000225, 0.0001],
        error_variance_range: (0.0006, 0.0016),
        mean_range: (0.005, 0.025),
    }
}

/// Screened squared-Sharpe consistency: medians shrink along the grid and
/// the non-sensible contrast stays far from its target.
#[test]
fn acceptance_screened_sharpe_consistency() {
    let started = Instant::now();
    let spec = TheorySpec {
        grid: vec![120, 360, 1080],
        replications: 200,
        seed: 7,
        estimator: TheoryEstimator::Nodewise,
        screening: ScreeningMode::Sensible,
        size_error: 2,
        universe_multiple: 2,
        market: acceptance_market(),
    };
    let table = sharpe_consistency_experiment(&spec).unwrap();
    let medians: Vec<f64> = table.points.iter().map(|p| p.q50).collect();
    assert!(
        table.converged,
        "medians not weakly decreasing: {medians:?}"
    );
    let terminal = medians[medians.len() - 1];
    assert!(terminal < 0.10, "terminal median {terminal:.4}");
    for point in &table.points {
        assert!(point.fail_rate <= 0.2, "fail rate {} at n={}", point.fail_rate, point.n);
    }

    let contrast_spec = TheorySpec {
        screening: ScreeningMode::Random,
        ..spec
    };
    let contrast = sharpe_consistency_experiment(&contrast_spec).unwrap();
    let contrast_terminal = contrast.points.last().unwrap().q50;
    assert!(
        contrast_terminal >= 2.0 * terminal,
        "contrast median {contrast_terminal:.4} vs sensible {terminal:.4}"
    );
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 900.0, "runtime {elapsed:.1}s exceeds 15min");
    println!(
        "ACCEPTANCE PASS screened sharpe consistency: medians {medians:?}, contrast terminal {contrast_terminal:.4} in {elapsed:.1}s"
    );
}

/// Net-return formula invariants and the hand-derived full switch.
#[test]
fn acceptance_net_return_formula() {
    let month: Month = "2020-02".parse().unwrap();
    let weights = |entries: &[(&str, f64)]| -> WeightVector {
        WeightVector::new(
            entries.iter().map(|(a, _)| AssetId::from(*a)).collect(),
            DVector::from_vec(entries.iter().map(|(_, w)| *w).collect()),
        )
        .unwrap()
    };
    let returns = |entries: &[(&str, f64)]| -> BTreeMap<AssetId, f64> {
        entries.iter().map(|(a, r)| (AssetId::from(*a), *r)).collect()
    };

    // Zero cost: net == gross exactly, any books.
    let w_new = weights(&[("A", 0.7), ("B", 0.3)]);
    let holder = HoldingsState::from_weights(&weights(&[("A", 0.2), ("B", 0.8)]));
    let y = returns(&[("A", 0.03), ("B", -0.02)]);
    let out = net_return(&w_new, &holder, &y, month, 0.0).unwrap();
    assert_eq!(out.net, out.gross);

    // Zero turnover: drift-only rebalance, exact.
    let holder = HoldingsState::from_weights(&weights(&[("A", 0.5), ("B", 0.5)]));
    let gross = 0.5 * 0.03 - 0.5 * 0.02;
    let drifted = weights(&[
        ("A", 0.5 * 1.03 / (1.0 + gross)),
        ("B", 0.5 * 0.98 / (1.0 + gross)),
    ]);
    let out = net_return(&drifted, &holder, &y, month, 0.0025).unwrap();
    assert_eq!(out.turnover, 0.0);
    assert_eq!(out.net, out.gross);

    // Hand-derived full switch: zero returns, c = 10bp, turnover 2.
    let holder = HoldingsState::from_weights(&weights(&[("A", 1.0)]));
    let w_new = weights(&[("B", 1.0)]);
    let y = returns(&[("A", 0.0), ("B", 0.0)]);
    let out = net_return(&w_new, &holder, &y, month, 0.001).unwrap();
    assert!((out.turnover - 2.0).abs() < 1e-12);
    assert!((out.net - (-0.002)).abs() < 1e-12);
    println!(
        "ACCEPTANCE PASS net-return formula: invariants exact, full switch net {:.6}",
        out.net
    );
}

/// Independent restatement of the consensus rule used as the oracle.
fn consensus_oracle(s1: &[Action], s2: &[Action]) -> Vec<Action> {
    let n = s1.len();
    let mut intersection = vec![Action::Hold; n];
    let mut size = 0;
    for i in 0..n {
        if s1[i] == s2[i] && s1[i] != Action::Hold {
            intersection[i] = s1[i];
            size += 1;
        }
    }
    if size > 1 {
        return intersection;
    }
    // Union fallback: keep one-sided signals, drop direction conflicts.
    let mut union = vec![Action::Hold; n];
    for i in 0..n {
        union[i] = match (s1[i], s2[i]) {
            (Action::Hold, x) | (x, Action::Hold) => x,
            (x, y) if x == y => x,
            _ => Action::Hold,
        };
    }
    union
}

/// Consensus vs. brute force over every two-agent assignment on four
/// assets, plus every three-agent single-asset case.
#[test]
fn acceptance_consensus_rule() {
    let date: Month = "2020-01".parse().unwrap();
    let actions = [Action::Buy, Action::Sell, Action::Hold];
    let names = ["A", "B", "C", "D"];
    let assignments: Vec<Vec<Action>> = (0..81)
        .map(|mut code| {
            (0..4)
                .map(|_| {
                    let a = actions[code % 3];
                    code /= 3;
                    a
                })
                .collect()
        })
        .collect();

    let mut checked = 0usize;
    for a1 in &assignments {
        for a2 in &assignments {
            let mut set1 = SignalSet::new(date);
            let mut set2 = SignalSet::new(date);
            for (i, name) in names.iter().enumerate() {
                set1.set(AssetId::from(*name), a1[i]);
                set2.set(AssetId::from(*name), a2[i]);
            }
            let (combined, _) = portsieve::agents::combine_consensus(
                &[set1, set2],
                portsieve::agents::Fallback::Union,
            )
            .unwrap();
            let expected = consensus_oracle(a1, a2);
            for (i, name) in names.iter().enumerate() {
                assert_eq!(
                    combined.action(&AssetId::from(*name)),
                    expected[i],
                    "assignments {a1:?} / {a2:?} asset {name}"
                );
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 6561);

    // Three agents: majority vote over all 27 single-asset cases.
    let mut majority_checked = 0usize;
    for &x in &actions {
        for &y in &actions {
            for &z in &actions {
                let mk = |a: Action| {
                    let mut s = SignalSet::new(date);
                    s.set(AssetId::from("X"), a);
                    s
                };
                let (combined, _) = portsieve::agents::combine_consensus(
                    &[mk(x), mk(y), mk(z)],
                    portsieve::agents::Fallback::Union,
                )
                .unwrap();
                let votes = |want: Action| [x, y, z].iter().filter(|&&a| a == want).count();
                let expected = if votes(Action::Buy) >= 2 {
                    Action::Buy
                } else if votes(Action::Sell) >= 2 {
                    Action::Sell
                } else {
                    Action::Hold
                };
                assert_eq!(combined.action(&AssetId::from("X")), expected);
                majority_checked += 1;
            }
        }
    }
    assert_eq!(majority_checked, 27);
    println!(
        "ACCEPTANCE PASS consensus rule: {checked} two-agent assignments and {majority_checked} majority cases match brute force"
    );
}

/// Rule DSL: print/parse round trip at scale and the verbatim 2024 rules
/// classifying a hand-built cross-section.
#[test]
fn acceptance_rule_dsl() {
    // Random AST round trips.
    fn random_expr(rng: &mut impl Rng, depth: usize) -> RuleExpr {
        let features = ["bm", "mve", "mom12m", "prof"];
        if depth == 0 || rng.gen_bool(0.35) {
            return RuleExpr::Cmp {
                feature: features[rng.gen_range(0..features.len())].to_string(),
                op: match rng.gen_range(0..4) {
                    0 => CmpOp::Lt,
                    1 => CmpOp::Gt,
                    2 => CmpOp::Le,
                    _ => CmpOp::Ge,
                },
                threshold: (rng.gen_range(-250i32..250) as f64) / 100.0,
            };
        }
        match rng.gen_range(0..3) {
            0 => RuleExpr::And(
                Box::new(random_expr(rng, depth - 1)),
                Box::new(random_expr(rng, depth - 1)),
            ),
            1 => RuleExpr::Or(
                Box::new(random_expr(rng, depth - 1)),
                Box::new(random_expr(rng, depth - 1)),
            ),
            _ => RuleExpr::Not(Box::new(random_expr(rng, depth - 1))),
        }
    }
    let mut rng = stream_rng(107, "acceptance/dsl");
    for _ in 0..10_000 {
        let expr = random_expr(&mut rng, 6);
        let printed = expr.to_string();
        let reparsed = parse_rule(&printed).unwrap_or_else(|e| panic!("`{printed}`: {e}"));
        assert_eq!(reparsed, expr, "round trip failed for `{printed}`");
    }

    // Verbatim 2024 rules against a hand-evaluated cross-section.
    let buy = parse_rule("bm > 0.95 AND mve > 0.3 AND mom12m > -0.5").unwrap();
    let sell =
        parse_rule("(bm < -0.75 OR mom12m < -0.55 OR mve < -0.75) AND NOT (mom12m > 1.5)")
            .unwrap();
    let row = |bm: f64, mve: f64, mom: f64| -> BTreeMap<String, f64> {
        [
            ("bm".to_string(), bm),
            ("mve".to_string(), mve),
            ("mom12m".to_string(), mom),
        ]
        .into_iter()
        .collect()
    };
    // (bm, mve, mom12m) -> expected signal, evaluated by hand.
    let cases = [
        (row(1.2, 0.5, 0.0), Action::Buy),    // all three buy legs hold
        (row(-1.0, 0.0, 0.0), Action::Sell),  // cheap-book sell trigger
        (row(-1.0, 0.0, 2.0), Action::Hold),  // momentum guard blocks sell
        (row(0.0, 0.0, 0.0), Action::Hold),   // nothing fires
        (row(1.0, 0.31, -0.6), Action::Sell), // buy fails on momentum, sell fires
        (row(0.96, 0.29, 1.0), Action::Hold), // buy fails on size, sell quiet
    ];
    for (features, expected) in &cases {
        let is_buy = evaluate_rule(&buy, features).unwrap();
        let is_sell = evaluate_rule(&sell, features).unwrap();
        let actual = if is_buy {
            Action::Buy
        } else if is_sell {
            Action::Sell
        } else {
            Action::Hold
        };
        assert_eq!(actual, *expected, "features {features:?}");
    }
    println!("ACCEPTANCE PASS rule DSL: 10000 round trips and 6 hand-classified assets");
}

/// Bundled 100-asset, 240-month world: the full 15-cell backtest finishes
/// inside budget, reruns byte-identically, and the summary parses in the
/// method-by-objective layout.
#[test]
fn acceptance_end_to_end_determinism() {
    let started = Instant::now();
    let binary = env!("CARGO_BIN_EXE_portsieve");
    let dir = tempfile::tempdir().unwrap();
    let world = dir.path().join("world");

    let status = std::process::Command::new(binary)
        .args(["gen-synthetic", "--out"])
        .arg(&world)
        .args(["--seed", "42", "--assets", "100", "--months", "240"])
        .status()
        .unwrap();
    assert!(status.success());

    let run = |out: &std::path::Path| {
        let status = std::process::Command::new(binary)
            .args(["backtest", "--config"])
            .arg(world.join("run.toml"))
            .arg("--out")
            .arg(out)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success(), "backtest exited nonzero");
    };
    let out_a = dir.path().join("run-a");
    let out_b = dir.path().join("run-b");
    run(&out_a);
    run(&out_b);

    for file in ["monthly.csv", "summary.csv", "summary.txt", "audit.csv"] {
        let a = std::fs::read(out_a.join(file)).unwrap();
        let b = std::fs::read(out_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }

    let summary = std::fs::read_to_string(out_a.join("summary.csv")).unwrap();
    let rows = portsieve::report::parse_summary_table(&summary).unwrap();
    assert_eq!(rows.len(), 5, "expected 5 method rows");
    let labels: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(
        labels,
        vec!["NW", "Residual NW", "Deep learning", "POET", "NLS"]
    );
    let mut cells = 0;
    for row in &rows {
        for v in row.sharpe.iter() {
            assert!(v.is_some(), "missing cell in row {}", row.method);
            cells += 1;
        }
        for v in row.returns.iter().chain(row.variance.iter()) {
            assert!(v.is_some());
        }
    }
    assert_eq!(cells, 15, "expected 15 method x objective cells");
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "runtime {elapsed:.1}s exceeds 10min");
    println!(
        "ACCEPTANCE PASS end-to-end determinism: byte-identical 15-cell reports in {elapsed:.1}s"
    );
}
