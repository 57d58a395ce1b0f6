//! Screened high-dimensional portfolio engine.
//!
//! A two-stage pipeline: screening agents (threshold rules, news
//! sentiment, analyst revisions, logistic and rank screens) vote on a
//! buy/sell universe under a consensus rule, then a high-dimensional
//! precision-matrix estimator and a closed-form objective turn the
//! screened universe into portfolio weights. Around the core sit a
//! rolling net-of-cost backtest, a Monte-Carlo harness for screened
//! Sharpe-ratio consistency, and a deterministic synthetic-world
//! generator.
//!
//! Start from the `examples/` directory: each example exercises one
//! capability end to end. The `portsieve` binary exposes the same
//! functionality as subcommands (`backtest`, `screen`, `estimate`,
//! `gen-synthetic`, `validate-theory`).

pub mod agents;
pub mod backtest;
pub mod cli;
pub mod data;
pub mod dates;
pub mod portfolio;
pub mod precision;
pub mod report;
pub mod rng;
pub mod rules;
pub mod signals;
pub mod synthetic;
pub mod theory;

pub use data::{AssetId, CharacteristicsPanel, ReturnsMatrix, ReturnsPanel};
pub use dates::Month;
pub use precision::{EstimateOptions, Method, PrecisionEstimate};
pub use portfolio::{Objective, WeightVector};
pub use signals::{Action, SignalSet};
