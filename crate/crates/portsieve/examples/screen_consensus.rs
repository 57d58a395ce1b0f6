//! Screening agents and the consensus rule: decayed sentiment scores,
//! analyst revisions, the signed intersection, and both fallbacks.
//!
//! ```bash
//! cargo run --example screen_consensus
//! ```

use chrono::NaiveDate;
use portsieve::agents::{
    analyst_agent, combine_consensus, decay_weighted_sum, sentiment_agent, Fallback, ScoredEvent,
};
use portsieve::data::AssetId;
use portsieve::signals::{Action, SignalSet};
use portsieve::Month;
use std::collections::BTreeMap;

fn event(asset: &str, date: &str, value: f64) -> ScoredEvent {
    ScoredEvent {
        asset: AssetId::from(asset),
        timestamp: NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap(),
        value,
    }
}

fn main() {
    println!("=== Agents and consensus ===\n");
    let month: Month = "2024-03".parse().unwrap();
    let month_end = month.last_day();

    // Staleness decay: half the weight every seven days.
    let articles = vec![
        event("ACME", "2024-03-31", 0.4),
        event("ACME", "2024-03-17", 0.4),
    ];
    let decayed = decay_weighted_sum(&articles, month_end, 7.0).unwrap();
    println!("decayed sum of two 0.4-score articles (ages 0 and 14 days): {decayed:.3}");

    // Sentiment screen: strict 0.1 thresholds.
    let mut scores: BTreeMap<AssetId, Vec<ScoredEvent>> = BTreeMap::new();
    scores.insert(AssetId::from("ACME"), articles);
    scores.insert(
        AssetId::from("GLOOM"),
        vec![event("GLOOM", "2024-03-28", -0.6)],
    );
    scores.insert(
        AssetId::from("MEH"),
        vec![event("MEH", "2024-03-30", 0.05)],
    );
    let sentiment = sentiment_agent(&scores, month, 7.0).unwrap();
    println!("\nsentiment signals:");
    for name in ["ACME", "GLOOM", "MEH"] {
        println!("  {name:<6} -> {}", sentiment.action(&AssetId::from(name)));
    }

    // Analyst screen: a rising weighted recommendation level is a sell.
    let prev = month.prev();
    let current: BTreeMap<AssetId, Vec<ScoredEvent>> = [
        (AssetId::from("ACME"), vec![event("ACME", "2024-03-29", 1.6)]),
        (AssetId::from("GLOOM"), vec![event("GLOOM", "2024-03-29", 3.8)]),
    ]
    .into_iter()
    .collect();
    let previous: BTreeMap<AssetId, Vec<ScoredEvent>> = [
        (AssetId::from("ACME"), vec![event("ACME", "2024-02-27", 2.4)]),
        (AssetId::from("GLOOM"), vec![event("GLOOM", "2024-02-27", 3.0)]),
    ]
    .into_iter()
    .collect();
    let analyst = analyst_agent(&current, &previous, month, prev).unwrap();
    println!("\nanalyst signals (falling level = buy):");
    for name in ["ACME", "GLOOM"] {
        println!("  {name:<6} -> {}", analyst.action(&AssetId::from(name)));
    }

    // Consensus: intersection of same-direction calls, union fallback when
    // the intersection has at most one element.
    let (combined, audit) =
        combine_consensus(&[sentiment.clone(), analyst.clone()], Fallback::Union).unwrap();
    println!(
        "\nconsensus: intersection size {}, fallback used: {}, conflicts dropped: {}",
        audit.intersection_size, audit.fallback_used, audit.conflicts_dropped
    );
    for (asset, action) in combined.non_hold() {
        println!("  {asset:<6} -> {action}");
    }

    // Designated-agent fallback returns one agent verbatim.
    let mut lonely_a = SignalSet::new(month);
    lonely_a.set(AssetId::from("ACME"), Action::Buy);
    let mut lonely_b = SignalSet::new(month);
    lonely_b.set(AssetId::from("OTHER"), Action::Sell);
    let (designated, _audit) =
        combine_consensus(&[lonely_a, lonely_b.clone()], Fallback::DesignatedAgent(1)).unwrap();
    println!(
        "\nempty intersection with designated-agent fallback: follows agent 1 verbatim = {}",
        designated == lonely_b
    );

    // Three agents: two-of-three majority.
    let mk = |entries: &[(&str, Action)]| {
        let mut s = SignalSet::new(month);
        for (a, act) in entries {
            s.set(AssetId::from(*a), *act);
        }
        s
    };
    let (majority, _) = combine_consensus(
        &[
            mk(&[("ACME", Action::Buy), ("GLOOM", Action::Sell)]),
            mk(&[("ACME", Action::Buy), ("GLOOM", Action::Buy)]),
            mk(&[("GLOOM", Action::Sell)]),
        ],
        Fallback::Union,
    )
    .unwrap();
    println!("\nthree-agent majority:");
    for name in ["ACME", "GLOOM"] {
        println!("  {name:<6} -> {}", majority.action(&AssetId::from(name)));
    }
}
