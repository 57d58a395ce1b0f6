//! Threshold-rule DSL walkthrough: parsing, precedence, pretty-printing,
//! and cross-section classification.
//!
//! ```bash
//! cargo run --example parse_rules
//! ```

use portsieve::data::AssetId;
use portsieve::rules::{apply_rules, evaluate_rule, parse_rule, RulePair};
use std::collections::BTreeMap;

fn main() {
    println!("=== Screening-rule DSL ===\n");

    let buy_text = "bm > 0.95 AND mve > 0.3 AND mom12m > -0.5";
    let sell_text = "(bm < -0.75 OR mom12m < -0.55 OR mve < -0.75) AND NOT (mom12m > 1.5)";

    let buy = parse_rule(buy_text).unwrap();
    let sell = parse_rule(sell_text).unwrap();
    println!("buy rule:    {buy_text}");
    println!("parsed as:   {buy}");
    println!("sell rule:   {sell_text}");
    println!("parsed as:   {sell}\n");

    // Precedence: NOT binds tighter than AND, AND tighter than OR.
    let expr = parse_rule("NOT bm > 1 AND mve < 0 OR mom12m >= 2").unwrap();
    println!("precedence:  NOT bm > 1 AND mve < 0 OR mom12m >= 2");
    println!("reads as:    {expr}\n");

    // Errors carry positions.
    match parse_rule("bm >> 1") {
        Err(e) => println!("error demo:  {e}"),
        Ok(_) => unreachable!(),
    }
    match parse_rule("bm > 1e-3") {
        Err(e) => println!("error demo:  {e} (scientific notation is data, not grammar)\n"),
        Ok(_) => unreachable!(),
    }

    // Evaluate one row: the momentum guard blocks the sell branch.
    let row: BTreeMap<String, f64> = [
        ("bm".to_string(), -1.0),
        ("mom12m".to_string(), 2.0),
        ("mve".to_string(), 0.0),
    ]
    .into_iter()
    .collect();
    println!(
        "guarded row (bm -1.0, mom12m 2.0): sell fires = {}",
        evaluate_rule(&sell, &row).unwrap()
    );

    // Classify a small cross-section: buy wins on overlap, else sell, else hold.
    let pair = RulePair::new(
        buy,
        sell,
        "2024-01".parse().unwrap(),
        "2024-12".parse().unwrap(),
    )
    .unwrap();
    let mut cross: BTreeMap<AssetId, BTreeMap<String, f64>> = BTreeMap::new();
    for (name, bm, mve, mom) in [
        ("VALUE", 1.2, 0.5, 0.0),
        ("CHEAP", -1.0, 0.0, 0.0),
        ("RUNNER", -1.0, 0.0, 2.0),
        ("MIDDLE", 0.0, 0.0, 0.0),
    ] {
        cross.insert(
            AssetId::from(name),
            [
                ("bm".to_string(), bm),
                ("mve".to_string(), mve),
                ("mom12m".to_string(), mom),
            ]
            .into_iter()
            .collect(),
        );
    }
    let signals = apply_rules(&pair, "2024-03".parse().unwrap(), &cross).unwrap();
    println!("\ncross-section classification:");
    for asset in cross.keys() {
        println!("  {asset:<8} -> {}", signals.action(asset));
    }
}
