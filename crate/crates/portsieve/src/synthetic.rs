//! Deterministic synthetic data bundles.
//!
//! Builds a coherent world for pipeline runs: a factor-driven return
//! panel, slow-moving characteristics that weakly predict next-month
//! returns, per-article sentiment scores and analyst recommendation
//! revisions correlated with next-month returns at a configurable
//! strength, and yearly threshold-rule schedules. A fixed seed produces
//! byte-identical files.

use crate::data::AssetId;
use crate::dates::Month;
use crate::rng::stream_rng;
use chrono::Datelike;
use rand::Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct WorldConfig {
    pub assets: usize,
    pub months: usize,
    pub start: Month,
    pub seed: u64,
    /// 0 removes all predictability; 1 is the default coupling.
    pub strength: f64,
    /// Fraction of characteristic cells left missing.
    pub missing_rate: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            assets: 100,
            months: 240,
            start: Month::new(2000, 1).expect("valid month"),
            seed: 42,
            strength: 1.0,
            missing_rate: 0.002,
        }
    }
}

/// An in-memory world: every generated file's contents as text.
#[derive(Debug, Clone)]
pub struct World {
    pub returns_csv: String,
    pub characteristics_csv: String,
    pub factors_csv: String,
    pub sentiment_csv: String,
    pub analyst_csv: String,
    pub rules_json: String,
    /// Raw next-month cross-sectional return ranks, kept for hit-rate
    /// diagnostics in tests.
    pub months: Vec<Month>,
    pub assets: Vec<AssetId>,
}

const FEATURES: [&str; 4] = ["mve", "bm", "mom12m", "prof"];

fn fmt_f(v: f64) -> String {
    format!("{v:.8}")
}

/// Generate the world in memory.
pub fn generate_world(config: &WorldConfig) -> World {
    let p = config.assets;
    let n = config.months;
    let assets: Vec<AssetId> = (0..p).map(|j| AssetId::new(format!("A{j:04}"))).collect();
    let months: Vec<Month> = (0..n).map(|t| config.start.add_months(t as i32)).collect();

    // Latent AR(1) characteristics per (asset, feature).
    let mut char_rng = stream_rng(config.seed, "synthetic/characteristics");
    let mut latent = vec![vec![[0.0f64; FEATURES.len()]; p]; n];
    for j in 0..p {
        for f in 0..FEATURES.len() {
            let mut x = 0.64 * crate::rng::normal(&mut char_rng);
            for t in 0..n {
                x = 0.95 * x + 0.2 * crate::rng::normal(&mut char_rng);
                latent[t][j][f] = x;
            }
        }
    }
    // Cross-sectionally standardized copies drive the return tilt.
    let mut zscores = vec![vec![[0.0f64; FEATURES.len()]; p]; n];
    for t in 0..n {
        for f in 0..FEATURES.len() {
            let mean: f64 = (0..p).map(|j| latent[t][j][f]).sum::<f64>() / p as f64;
            let var: f64 = (0..p)
                .map(|j| (latent[t][j][f] - mean).powi(2))
                .sum::<f64>()
                / (p as f64 - 1.0);
            let sd = var.sqrt().max(1e-9);
            for j in 0..p {
                zscores[t][j][f] = (latent[t][j][f] - mean) / sd;
            }
        }
    }

    // Factor structure.
    let mut market_rng = stream_rng(config.seed, "synthetic/market");
    let factor_sds = [0.04, 0.02, 0.012];
    let loadings: Vec<[f64; 3]> = (0..p)
        .map(|_| {
            [
                1.0 + 0.3 * crate::rng::normal(&mut market_rng),
                0.4 * crate::rng::normal(&mut market_rng),
                0.4 * crate::rng::normal(&mut market_rng),
            ]
        })
        .collect();
    let idio_sd: Vec<f64> = (0..p).map(|_| market_rng.gen_range(0.03..0.07)).collect();
    // Persistent cross-sectional alpha spread keeps window means away from
    // the ones direction, which the mean-variance weights need.
    let alpha: Vec<f64> = (0..p).map(|_| market_rng.gen_range(-0.003..0.009)).collect();

    let mut draw_rng = stream_rng(config.seed, "synthetic/draws");
    let mut factors = vec![[0.0f64; 3]; n];
    let mut returns = vec![vec![0.0f64; p]; n];
    for t in 0..n {
        for f in 0..3 {
            factors[t][f] = factor_sds[f] * crate::rng::normal(&mut draw_rng);
        }
        for j in 0..p {
            // Characteristics known at t-1 tilt month-t returns.
            let tilt = if t > 0 {
                let z = &zscores[t - 1][j];
                config.strength * (0.004 * z[1] + 0.004 * z[2] + 0.002 * z[3] - 0.002 * z[0])
            } else {
                0.0
            };
            let mut r = 0.003 + alpha[j] + tilt + idio_sd[j] * crate::rng::normal(&mut draw_rng);
            for f in 0..3 {
                r += loadings[j][f] * factors[t][f];
            }
            returns[t][j] = r.max(-0.95);
        }
    }

    // Cross-sectional return z-scores used to couple news with next-month
    // performance.
    let mut ret_z = vec![vec![0.0f64; p]; n];
    for t in 0..n {
        let mean: f64 = returns[t].iter().sum::<f64>() / p as f64;
        let var: f64 =
            returns[t].iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (p as f64 - 1.0);
        let sd = var.sqrt().max(1e-9);
        for j in 0..p {
            ret_z[t][j] = (returns[t][j] - mean) / sd;
        }
    }

    // Files.
    let mut returns_csv = String::from("date,asset,ret\n");
    for (t, m) in months.iter().enumerate() {
        for (j, a) in assets.iter().enumerate() {
            let _ = writeln!(returns_csv, "{m},{a},{}", fmt_f(returns[t][j]));
        }
    }

    let mut missing_rng = stream_rng(config.seed, "synthetic/missing");
    let mut characteristics_csv = String::from("date,asset,feature,value\n");
    for (t, m) in months.iter().enumerate() {
        for (j, a) in assets.iter().enumerate() {
            for (f, name) in FEATURES.iter().enumerate() {
                if missing_rng.gen::<f64>() < config.missing_rate {
                    let _ = writeln!(characteristics_csv, "{m},{a},{name},");
                } else {
                    let _ = writeln!(
                        characteristics_csv,
                        "{m},{a},{name},{}",
                        fmt_f(latent[t][j][f])
                    );
                }
            }
        }
    }

    let mut factors_csv = String::from("date,f1,f2,f3\n");
    for (t, m) in months.iter().enumerate() {
        let _ = writeln!(
            factors_csv,
            "{m},{},{},{}",
            fmt_f(factors[t][0]),
            fmt_f(factors[t][1]),
            fmt_f(factors[t][2])
        );
    }

    // Sentiment articles: up to three per asset-month, scores tilted by
    // next month's cross-sectional return rank.
    let mut news_rng = stream_rng(config.seed, "synthetic/news");
    let mut sentiment_csv = String::from("date,asset,score\n");
    for (t, m) in months.iter().enumerate() {
        let last_day = m.last_day().day();
        for (j, a) in assets.iter().enumerate() {
            let articles = news_rng.gen_range(0..=3);
            for _ in 0..articles {
                let day = news_rng.gen_range(1..=last_day);
                let signal = if t + 1 < n {
                    config.strength * 0.3 * ret_z[t + 1][j]
                } else {
                    0.0
                };
                let score = (signal + 0.3 * crate::rng::normal(&mut news_rng)).clamp(-1.0, 1.0);
                let _ = writeln!(
                    sentiment_csv,
                    "{:04}-{:02}-{:02},{a},{}",
                    m.year(),
                    m.month(),
                    day,
                    fmt_f(score)
                );
            }
        }
    }

    // Analyst recommendation levels: a clamped random walk on a 1..5
    // scale whose innovations lean against next-month returns (rising
    // levels are deteriorating opinions).
    let mut analyst_rng = stream_rng(config.seed, "synthetic/analyst");
    let mut analyst_csv = String::from("date,asset,recommendation\n");
    let mut levels: Vec<f64> = (0..p).map(|_| analyst_rng.gen_range(1.5..3.5)).collect();
    for (t, m) in months.iter().enumerate() {
        let last_day = m.last_day().day();
        for (j, a) in assets.iter().enumerate() {
            let revisions = analyst_rng.gen_range(0..=2);
            for _ in 0..revisions {
                let lean = if t + 1 < n {
                    -config.strength * 0.45 * ret_z[t + 1][j]
                } else {
                    0.0
                };
                levels[j] =
                    (levels[j] + lean + 0.35 * crate::rng::normal(&mut analyst_rng)).clamp(1.0, 5.0);
                let day = analyst_rng.gen_range(1..=last_day);
                let _ = writeln!(
                    analyst_csv,
                    "{:04}-{:02}-{:02},{a},{}",
                    m.year(),
                    m.month(),
                    day,
                    fmt_f(levels[j])
                );
            }
        }
    }

    // Yearly rule schedules over the world's span.
    let mut rule_rng = stream_rng(config.seed, "synthetic/rules");
    let first_year = months.first().expect("non-empty").year();
    let last_year = months.last().expect("non-empty").year();
    let mut records = Vec::new();
    for year in first_year..=last_year {
        let bm_buy = rule_rng.gen_range(0.45..0.75);
        let mom_buy = rule_rng.gen_range(-0.55..-0.15);
        let bm_sell = rule_rng.gen_range(-1.35..-0.95);
        let mom_sell = rule_rng.gen_range(-1.45..-1.05);
        let guard = rule_rng.gen_range(1.2..1.8);
        records.push(serde_json::json!({
            "effective_from": format!("{year:04}-01"),
            "effective_to": format!("{year:04}-12"),
            "buy": format!("bm > {bm_buy:.2} AND mom12m > {mom_buy:.2}"),
            "sell": format!(
                "(bm < {bm_sell:.2} OR mom12m < {mom_sell:.2}) AND NOT (mom12m > {guard:.2})"
            ),
        }));
    }
    let rules_json =
        serde_json::to_string_pretty(&records).expect("rule records serialize") + "\n";

    World {
        returns_csv,
        characteristics_csv,
        factors_csv,
        sentiment_csv,
        analyst_csv,
        rules_json,
        months,
        assets,
    }
}

/// File names used by [`write_world`] and the generated run config.
pub const RETURNS_FILE: &str = "returns.csv";
pub const CHARACTERISTICS_FILE: &str = "characteristics.csv";
pub const FACTORS_FILE: &str = "factors.csv";
pub const SENTIMENT_FILE: &str = "sentiment.csv";
pub const ANALYST_FILE: &str = "analyst.csv";
pub const RULES_FILE: &str = "rules.json";

/// Write the world's files into `dir`, returning the paths written.
pub fn write_world(world: &World, dir: impl AsRef<Path>) -> std::io::Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let entries = [
        (RETURNS_FILE, &world.returns_csv),
        (CHARACTERISTICS_FILE, &world.characteristics_csv),
        (FACTORS_FILE, &world.factors_csv),
        (SENTIMENT_FILE, &world.sentiment_csv),
        (ANALYST_FILE, &world.analyst_csv),
        (RULES_FILE, &world.rules_json),
    ];
    let mut paths = Vec::new();
    for (name, contents) in entries {
        let path = dir.join(name);
        std::fs::write(&path, contents)?;
        paths.push(path);
    }
    Ok(paths)
}
