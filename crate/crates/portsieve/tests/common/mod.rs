//! Shared helpers for integration tests: small synthetic bundles and
//! hand-rolled data files.

#![allow(dead_code)]

use portsieve::agents::load_event_panel;
use portsieve::backtest::DataBundle;
use portsieve::data::{load_characteristics_panel, load_returns_panel, winsorize_standardize};
use portsieve::precision::load_factor_panel;
use portsieve::rules::load_rule_schedule;
use portsieve::synthetic::{self, generate_world, WorldConfig};
use portsieve::Month;
use std::path::Path;

/// Generate a world, write it to `dir`, and load it back as a bundle.
pub fn world_bundle(config: &WorldConfig, dir: &Path) -> (DataBundle, Vec<Month>) {
    let world = generate_world(config);
    synthetic::write_world(&world, dir).expect("write world");
    let bundle = load_world_dir(dir);
    (bundle, world.months)
}

/// Load a directory written by `write_world` into a bundle.
pub fn load_world_dir(dir: &Path) -> DataBundle {
    let raw = load_characteristics_panel(dir.join(synthetic::CHARACTERISTICS_FILE)).unwrap();
    DataBundle {
        returns: load_returns_panel(dir.join(synthetic::RETURNS_FILE)).unwrap(),
        characteristics: Some(winsorize_standardize(&raw).unwrap()),
        factors: Some(load_factor_panel(dir.join(synthetic::FACTORS_FILE)).unwrap()),
        sentiment: Some(load_event_panel(dir.join(synthetic::SENTIMENT_FILE), "score").unwrap()),
        analyst: Some(
            load_event_panel(dir.join(synthetic::ANALYST_FILE), "recommendation").unwrap(),
        ),
        rules: Some(load_rule_schedule(dir.join(synthetic::RULES_FILE)).unwrap()),
    }
}

pub fn month(s: &str) -> Month {
    s.parse().unwrap()
}
