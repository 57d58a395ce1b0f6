//! Rolling monthly backtest: screen, estimate, weight, realize net
//! returns with proportional transaction costs, and summarize.
//!
//! Timing convention: signals and estimates use information through the
//! decision month `t` only (estimation windows are built by
//! [`crate::data::align_window`] with `end_date = t`, which is the
//! no-look-ahead guard); the weights chosen at `t` earn month `t+1`. At
//! the end of month `t+1` the book drifts with realized returns and
//! trades into the next decision's weights; that trade's cost is charged
//! to month `t+1`, exactly as the net-return formula prices it. The very
//! first out-of-sample month additionally pays full establishment cost
//! from an all-cash start (flagged in the audit); a config switch grants
//! the initial position free instead.

use crate::agents::{
    self, analyst_agent, combine_consensus, logistic_agent, novy_marx_agent, rule_agent,
    sentiment_agent, AgentError, ConsensusAudit, EventPanel, Fallback, TrainRow,
};
use crate::data::{align_window, AssetId, CharacteristicsPanel, DataError, ReturnsPanel};
use crate::dates::Month;
use crate::portfolio::{estimate_mean, weights_for, Objective, PortfolioError, WeightVector};
use crate::precision::{
    estimate_precision, EstimateOptions, EstimatorError, FactorPanel, Method,
};
use crate::rules::RulePair;
use crate::signals::SignalSet;
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum BacktestError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("agent `{agent}` requires the {what} input, which was not provided")]
    MissingInput { agent: &'static str, what: &'static str },
    #[error("returns panel has no observations in {0}, inside the required coverage range")]
    DataCoverage(Month),
    #[error("no return for {asset} in {month}; held position cannot be realized")]
    MissingReturn { asset: AssetId, month: Month },
    #[error("portfolio wiped out in {month}: gross return {gross}")]
    PortfolioWipedOut { month: Month, gross: f64 },
    #[error("summary needs at least 2 monthly returns, got {0}")]
    TooFewMonths(usize),
    #[error("net return series has zero variance; Sharpe ratio undefined")]
    ZeroVariance,
    #[error("{method} failed in {month} under the abort policy: {source}")]
    EstimatorAborted {
        method: Method,
        month: Month,
        #[source]
        source: EstimatorError,
    },
    #[error("weights for {objective} failed in {month} under the abort policy: {source}")]
    WeightsAborted {
        objective: Objective,
        month: Month,
        #[source]
        source: PortfolioError,
    },
    #[error("long-short portfolio requires a non-empty {0} leg")]
    EmptyLeg(&'static str),
    #[error("value weighting requires a positive total magnitude in the {0} leg")]
    ZeroLegMagnitude(&'static str),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Screening sources selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum AgentKind {
    Rules,
    Sentiment,
    Analyst,
    Logistic,
    NovyMarx,
}

impl AgentKind {
    pub fn code(self) -> &'static str {
        match self {
            AgentKind::Rules => "rules",
            AgentKind::Sentiment => "sentiment",
            AgentKind::Analyst => "analyst",
            AgentKind::Logistic => "logistic",
            AgentKind::NovyMarx => "novymarx",
        }
    }

    pub fn from_code(code: &str) -> Option<AgentKind> {
        match code {
            "rules" => Some(AgentKind::Rules),
            "sentiment" => Some(AgentKind::Sentiment),
            "analyst" => Some(AgentKind::Analyst),
            "logistic" => Some(AgentKind::Logistic),
            "novymarx" => Some(AgentKind::NovyMarx),
            _ => None,
        }
    }
}

/// What to do when an estimator or weight formula fails inside a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailurePolicy {
    /// Record an all-cash month with an audit note and continue.
    Skip,
    /// Abort the backtest with an error.
    Abort,
}

/// Backtest settings. `out_sample_start..=out_sample_end` are the earning
/// months; each decision happens one month earlier.
#[derive(Debug, Clone)]
pub struct BacktestConfig {
    pub train_window: usize,
    /// Proportional cost in basis points.
    pub cost_bp: f64,
    pub methods: Vec<Method>,
    pub objectives: Vec<Objective>,
    pub agents: Vec<AgentKind>,
    pub fallback: Fallback,
    /// Target monthly return for the mean-variance objective.
    pub rho: f64,
    pub out_sample_start: Month,
    pub out_sample_end: Month,
    pub seed: u64,
    pub failure_policy: FailurePolicy,
    /// Grant the first position free of establishment cost.
    pub initial_cost_free: bool,
    /// Clear holdings before these earning months (used to validate the
    /// split-and-concatenate property).
    pub reset_months: Vec<Month>,
    pub half_life_days: f64,
    pub logistic_features: Vec<String>,
    pub profitability_feature: String,
    pub value_feature: String,
    pub estimate: EstimateOptions,
}

impl BacktestConfig {
    pub fn new(out_sample_start: Month, out_sample_end: Month) -> BacktestConfig {
        BacktestConfig {
            train_window: 180,
            cost_bp: 10.0,
            methods: Method::ALL.to_vec(),
            objectives: Objective::ALL.to_vec(),
            agents: vec![AgentKind::Rules, AgentKind::Sentiment],
            fallback: Fallback::Union,
            rho: crate::portfolio::DEFAULT_TARGET_RETURN,
            out_sample_start,
            out_sample_end,
            seed: 0,
            failure_policy: FailurePolicy::Abort,
            initial_cost_free: false,
            reset_months: Vec::new(),
            half_life_days: agents::DEFAULT_HALF_LIFE_DAYS,
            logistic_features: vec!["mve".into(), "bm".into(), "mom12m".into()],
            profitability_feature: "prof".into(),
            value_feature: "bm".into(),
            estimate: EstimateOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BacktestError> {
        if self.train_window < 24 {
            return Err(BacktestError::BadConfig(format!(
                "train_window {} below the 24-month floor",
                self.train_window
            )));
        }
        if self.cost_bp < 0.0 || !self.cost_bp.is_finite() {
            return Err(BacktestError::BadConfig(format!(
                "cost_bp {} must be non-negative",
                self.cost_bp
            )));
        }
        if self.out_sample_start > self.out_sample_end {
            return Err(BacktestError::BadConfig(format!(
                "out_sample_start {} after out_sample_end {}",
                self.out_sample_start, self.out_sample_end
            )));
        }
        if self.agents.is_empty() || self.agents.len() > 3 {
            return Err(BacktestError::BadConfig(format!(
                "need 1 to 3 agents, got {}",
                self.agents.len()
            )));
        }
        if self.methods.is_empty() || self.objectives.is_empty() {
            return Err(BacktestError::BadConfig(
                "at least one method and one objective required".into(),
            ));
        }
        Ok(())
    }

    /// Cost rate per unit turnover.
    pub fn cost_rate(&self) -> f64 {
        self.cost_bp / 10_000.0
    }
}

/// Everything the pipeline reads. Standardize characteristics before
/// building the bundle.
#[derive(Debug, Clone, Default)]
pub struct DataBundle {
    pub returns: ReturnsPanel,
    pub characteristics: Option<CharacteristicsPanel>,
    pub factors: Option<FactorPanel>,
    pub sentiment: Option<EventPanel>,
    pub analyst: Option<EventPanel>,
    pub rules: Option<Vec<RulePair>>,
}

/// Prior holdings carried into a rebalance; empty at the first
/// out-of-sample month.
#[derive(Debug, Clone, Default)]
pub struct HoldingsState {
    positions: Vec<(AssetId, f64)>,
}

impl HoldingsState {
    pub fn empty() -> HoldingsState {
        HoldingsState::default()
    }

    pub fn from_weights(w: &WeightVector) -> HoldingsState {
        HoldingsState {
            positions: w
                .assets
                .iter()
                .cloned()
                .zip(w.weights.iter().copied())
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[(AssetId, f64)] {
        &self.positions
    }
}

/// Realized gross/net/turnover for one month.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetReturn {
    pub gross: f64,
    pub net: f64,
    pub turnover: f64,
}

/// Realize one month. `w_old` is the book that held through the month —
/// its gross return is the month's `y_P` — and `w_new` is the book chosen
/// at the month-end rebalance. Turnover is
/// `sum_j |w_new_j - w_old_j (1+y_j)/(1+y_P)|` over the union of both
/// asset lists (zero-filled), and the net return subtracts
/// `c (1+y_P) * turnover`. The gross has to come from the drifting side:
/// that is the only reading under which a drift-only rebalance has
/// exactly zero turnover.
pub fn net_return(
    w_new: &WeightVector,
    w_old: &HoldingsState,
    returns: &BTreeMap<AssetId, f64>,
    month: Month,
    cost_rate: f64,
) -> Result<NetReturn, BacktestError> {
    for asset in &w_new.assets {
        if !returns.contains_key(asset) {
            return Err(BacktestError::MissingReturn {
                asset: asset.clone(),
                month,
            });
        }
    }
    let mut gross = 0.0;
    for (asset, w) in &w_old.positions {
        let y = returns
            .get(asset)
            .ok_or_else(|| BacktestError::MissingReturn {
                asset: asset.clone(),
                month,
            })?;
        gross += w * y;
    }
    if 1.0 + gross <= 0.0 {
        return Err(BacktestError::PortfolioWipedOut { month, gross });
    }

    // Union alignment with zero fill on either side.
    let mut union: BTreeMap<AssetId, (f64, f64)> = BTreeMap::new();
    for (j, asset) in w_new.assets.iter().enumerate() {
        union.entry(asset.clone()).or_default().0 = w_new.weights[j];
    }
    for (asset, w) in &w_old.positions {
        union.entry(asset.clone()).or_default().1 = *w;
    }
    let mut turnover = 0.0;
    for (asset, (new_w, old_w)) in &union {
        let drifted = if *old_w == 0.0 {
            0.0
        } else {
            let y = returns[asset];
            old_w * (1.0 + y) / (1.0 + gross)
        };
        turnover += (new_w - drifted).abs();
    }
    let net = gross - cost_rate * (1.0 + gross) * turnover;
    Ok(NetReturn {
        gross,
        net,
        turnover,
    })
}

/// Out-of-sample summary statistics: monthly mean (denominator T), sample
/// variance (T-1), Sharpe ratio, and the x12 / x12 / xsqrt(12)
/// annualizations.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Summary {
    pub mu_net: f64,
    pub sigma2_net: f64,
    pub sr_net: f64,
    pub annualized_return: f64,
    pub annualized_variance: f64,
    pub annualized_sr: f64,
}

pub fn summarize(net_returns: &[f64]) -> Result<Summary, BacktestError> {
    let t = net_returns.len();
    if t < 2 {
        return Err(BacktestError::TooFewMonths(t));
    }
    let mu = net_returns.iter().sum::<f64>() / t as f64;
    let sigma2 = net_returns.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / (t as f64 - 1.0);
    if sigma2 <= 0.0 {
        return Err(BacktestError::ZeroVariance);
    }
    let sr = mu / sigma2.sqrt();
    Ok(Summary {
        mu_net: mu,
        sigma2_net: sigma2,
        sr_net: sr,
        annualized_return: 12.0 * mu,
        annualized_variance: 12.0 * sigma2,
        annualized_sr: 12f64.sqrt() * sr,
    })
}

/// One realized month inside a method x objective cell.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MonthlyRecord {
    pub date: Month,
    pub gross: f64,
    pub net: f64,
    pub turnover: f64,
    pub p_hat: usize,
    pub assets: Vec<AssetId>,
    /// True when the month was spent in cash (empty screen or skipped
    /// failure).
    pub cash: bool,
}

/// Per-decision-month audit trail shared by all cells.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AuditRecord {
    pub decision_month: Month,
    pub earning_month: Month,
    pub consensus: ConsensusAudit,
    pub screened: usize,
    pub dropped_coverage: usize,
    pub cash: bool,
    pub notes: Vec<String>,
}

/// A method x objective strategy cell.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CellReport {
    pub method: Method,
    pub objective: Objective,
    pub monthly: Vec<MonthlyRecord>,
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct BacktestReport {
    pub cells: Vec<CellReport>,
    pub audit: Vec<AuditRecord>,
}

impl BacktestReport {
    pub fn cell(&self, method: Method, objective: Objective) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.objective == objective)
    }
}

/// Produce the consensus signal set for decision month `t`.
pub fn screen_month(
    config: &BacktestConfig,
    bundle: &DataBundle,
    t: Month,
) -> Result<(SignalSet, ConsensusAudit), BacktestError> {
    let mut sets = Vec::with_capacity(config.agents.len());
    for agent in &config.agents {
        sets.push(agent_signals(config, bundle, *agent, t)?);
    }
    if sets.len() == 1 {
        let set = sets.pop().expect("one set");
        let audit = ConsensusAudit {
            intersection_size: set.len(),
            fallback_used: false,
            conflicts_dropped: 0,
        };
        Ok((set, audit))
    } else {
        Ok(combine_consensus(&sets, config.fallback)?)
    }
}

fn characteristics_at<'a>(
    bundle: &'a DataBundle,
    agent: &'static str,
) -> Result<&'a CharacteristicsPanel, BacktestError> {
    bundle
        .characteristics
        .as_ref()
        .ok_or(BacktestError::MissingInput {
            agent,
            what: "characteristics panel",
        })
}

fn agent_signals(
    config: &BacktestConfig,
    bundle: &DataBundle,
    agent: AgentKind,
    t: Month,
) -> Result<SignalSet, BacktestError> {
    match agent {
        AgentKind::Rules => {
            let schedule = bundle.rules.as_ref().ok_or(BacktestError::MissingInput {
                agent: "rules",
                what: "rule schedule",
            })?;
            let cross = characteristics_at(bundle, "rules")?.cross_section(t);
            Ok(rule_agent(schedule, t, &cross)?)
        }
        AgentKind::Sentiment => {
            let events = bundle.sentiment.as_ref().ok_or(BacktestError::MissingInput {
                agent: "sentiment",
                what: "sentiment event file",
            })?;
            Ok(sentiment_agent(
                &events.month_events(t),
                t,
                config.half_life_days,
            )?)
        }
        AgentKind::Analyst => {
            let events = bundle.analyst.as_ref().ok_or(BacktestError::MissingInput {
                agent: "analyst",
                what: "analyst event file",
            })?;
            Ok(analyst_agent(
                &events.month_events(t),
                &events.month_events(t.prev()),
                t,
                t.prev(),
            )?)
        }
        AgentKind::Logistic => {
            let panel = characteristics_at(bundle, "logistic")?;
            let cross = panel.cross_section(t);
            let mut rows: Vec<TrainRow> = Vec::new();
            let start = t.add_months(-(config.train_window as i32));
            for s in Month::range_inclusive(start, t.prev()) {
                let features_at_s = panel.cross_section(s);
                for (asset, feats) in &features_at_s {
                    let label = match bundle.returns.get(s.next(), asset) {
                        Some(r) => r > 0.0,
                        None => continue,
                    };
                    let mut values = Vec::with_capacity(config.logistic_features.len());
                    let mut complete = true;
                    for name in &config.logistic_features {
                        match feats.get(name) {
                            Some(v) => values.push(*v),
                            None => {
                                complete = false;
                                break;
                            }
                        }
                    }
                    if complete {
                        rows.push(TrainRow {
                            features: values,
                            label,
                        });
                    }
                }
            }
            Ok(logistic_agent(
                &rows,
                &config.logistic_features,
                &cross,
                t,
            )?)
        }
        AgentKind::NovyMarx => {
            let panel = characteristics_at(bundle, "novymarx")?;
            let cross = panel.cross_section(t);
            let mut prof = BTreeMap::new();
            let mut value = BTreeMap::new();
            for (asset, feats) in &cross {
                if let Some(v) = feats.get(&config.profitability_feature) {
                    prof.insert(asset.clone(), *v);
                }
                if let Some(v) = feats.get(&config.value_feature) {
                    value.insert(asset.clone(), *v);
                }
            }
            Ok(novy_marx_agent(&prof, &value, cross.len(), t)?)
        }
    }
}

/// One decision month's output: a book per cell (None means cash) and
/// the audit row.
struct DecisionOutcome {
    books: BTreeMap<(Method, Objective), Option<WeightVector>>,
    audit: AuditRecord,
}

fn decide(
    config: &BacktestConfig,
    bundle: &DataBundle,
    decision: Month,
) -> Result<DecisionOutcome, BacktestError> {
    let mut notes: Vec<String> = Vec::new();

    // Stage 1: screen at t with month-t information only.
    let (signals, consensus) = screen_month(config, bundle, decision)?;
    let screened = signals.screened_assets();

    // Stage 2: estimation window over screened assets with coverage.
    let mut dropped_coverage = 0usize;
    let window = if screened.is_empty() {
        notes.push("empty screened set; month spent in cash".to_string());
        None
    } else {
        match align_window(&bundle.returns, decision, config.train_window, &screened) {
            Ok(report) => {
                dropped_coverage = report.dropped.len();
                Some(report.matrix)
            }
            Err(DataError::EmptyWindow { .. }) => {
                notes.push("no screened asset has full window coverage".to_string());
                None
            }
            Err(e) => return Err(e.into()),
        }
    };
    let cash = window.is_none();

    // Stage 3: estimate per method on the demeaned window, means raw.
    let mut estimates: BTreeMap<Method, Option<crate::precision::PrecisionEstimate>> =
        BTreeMap::new();
    let mean = match &window {
        Some(w) => {
            let mean = estimate_mean(w);
            let mut demeaned = w.clone();
            demeaned.values = w.demeaned();
            for &method in &config.methods {
                let mut options = config.estimate.clone();
                options.deep.seed =
                    crate::rng::derive_seed(config.seed, &format!("backtest/deep/{decision}"));
                match estimate_precision(method, &demeaned, bundle.factors.as_ref(), &options) {
                    Ok(est) => {
                        estimates.insert(method, Some(est));
                    }
                    Err(e) => match config.failure_policy {
                        FailurePolicy::Abort => {
                            return Err(BacktestError::EstimatorAborted {
                                method,
                                month: decision,
                                source: e,
                            })
                        }
                        FailurePolicy::Skip => {
                            notes.push(format!("{method} failed at {decision}: {e}"));
                            estimates.insert(method, None);
                        }
                    },
                }
            }
            Some(mean)
        }
        None => None,
    };

    // Stage 4: weights per objective.
    let mut books = BTreeMap::new();
    for &method in &config.methods {
        for &objective in &config.objectives {
            let book = match estimates.get(&method) {
                Some(Some(est)) => {
                    let mean = mean.as_ref().expect("mean exists with window");
                    match weights_for(objective, est, mean, config.rho) {
                        Ok(weights) => Some(weights),
                        Err(e) => match config.failure_policy {
                            FailurePolicy::Abort => {
                                return Err(BacktestError::WeightsAborted {
                                    objective,
                                    month: decision,
                                    source: e,
                                })
                            }
                            FailurePolicy::Skip => {
                                notes.push(format!(
                                    "{method}/{objective} weights failed at {decision}: {e}"
                                ));
                                None
                            }
                        },
                    }
                }
                _ => None,
            };
            books.insert((method, objective), book);
        }
    }

    Ok(DecisionOutcome {
        books,
        audit: AuditRecord {
            decision_month: decision,
            earning_month: decision.next(),
            consensus,
            screened: screened.len(),
            dropped_coverage,
            cash,
            notes,
        },
    })
}

/// Run the full rolling pipeline. Decisions happen every month from the
/// one before `out_sample_start` through `out_sample_end`; month `m`'s
/// record pairs the book decided at `m-1` (which earns `m`) with the
/// month-end trade into the book decided at `m`.
pub fn run_backtest(
    config: &BacktestConfig,
    bundle: &DataBundle,
) -> Result<BacktestReport, BacktestError> {
    config.validate()?;

    // Coverage precondition: panel observations must exist from the first
    // training month through the last earning month.
    let coverage_start = config
        .out_sample_start
        .add_months(-(config.train_window as i32));
    for m in Month::range_inclusive(coverage_start, config.out_sample_end) {
        if !bundle.returns.contains_date(m) {
            return Err(BacktestError::DataCoverage(m));
        }
    }

    let cost = config.cost_rate();
    let mut audit = Vec::new();
    let mut monthly: BTreeMap<(Method, Objective), Vec<MonthlyRecord>> = config
        .methods
        .iter()
        .flat_map(|&m| config.objectives.iter().map(move |&o| ((m, o), Vec::new())))
        .collect();

    let mut prev = decide(config, bundle, config.out_sample_start.prev())?;
    audit.push(prev.audit.clone());

    for earning in Month::range_inclusive(config.out_sample_start, config.out_sample_end) {
        let cur = decide(config, bundle, earning)?;

        // Returns realized in the earning month.
        let realized: BTreeMap<AssetId, f64> = bundle
            .returns
            .assets_at(earning)
            .into_iter()
            .map(|a| {
                let r = bundle.returns.get(earning, &a).expect("asset listed");
                (a, r)
            })
            .collect();

        let establishment_month =
            earning == config.out_sample_start || config.reset_months.contains(&earning);
        for (key, records) in monthly.iter_mut() {
            let holder = prev.books.get(key).cloned().flatten();
            let next = cur.books.get(key).cloned().flatten();
            let holder_state = match &holder {
                Some(w) => HoldingsState::from_weights(w),
                None => HoldingsState::empty(),
            };
            let next_book = next.unwrap_or_else(WeightVector::cash);
            let outcome = net_return(&next_book, &holder_state, &realized, earning, cost)?;
            let mut net = outcome.net;
            let mut turnover = outcome.turnover;
            if establishment_month && !config.initial_cost_free {
                // Full establishment from an all-cash start at the month
                // open, priced without drift.
                let establishment: f64 = holder_state
                    .positions()
                    .iter()
                    .map(|(_, w)| w.abs())
                    .sum();
                net -= cost * establishment;
                turnover += establishment;
            }
            records.push(MonthlyRecord {
                date: earning,
                gross: outcome.gross,
                net,
                turnover,
                p_hat: holder.as_ref().map_or(0, |w| w.assets.len()),
                assets: holder.as_ref().map_or_else(Vec::new, |w| w.assets.clone()),
                cash: holder.is_none(),
            });
        }

        audit.push(cur.audit.clone());
        prev = cur;
    }

    let mut cells = Vec::new();
    for &method in &config.methods {
        for &objective in &config.objectives {
            let records = monthly
                .remove(&(method, objective))
                .expect("cell initialized");
            let nets: Vec<f64> = records.iter().map(|m| m.net).collect();
            cells.push(CellReport {
                method,
                objective,
                summary: summarize(&nets).ok(),
                monthly: records,
            });
        }
    }
    Ok(BacktestReport { cells, audit })
}

impl WeightVector {
    /// The all-cash portfolio (no positions). Bypasses the sum-to-one
    /// contract deliberately; only the backtest uses it for cash months.
    fn cash() -> WeightVector {
        WeightVector {
            assets: Vec::new(),
            weights: nalgebra::DVector::zeros(0),
        }
    }
}

/// Leg weighting for the market-neutral long-short portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegWeighting {
    Equal,
    /// Within-leg weights proportional to the supplied magnitudes.
    Value,
}

/// Dollar-neutral long-short book: positions sum to +1/2 on the long leg
/// and -1/2 on the short leg (gross exposure one, net zero). This is a
/// different contract from [`WeightVector`]'s fully-invested sum-to-one.
#[derive(Debug, Clone, PartialEq)]
pub struct LongShortPortfolio {
    pub positions: Vec<(AssetId, f64)>,
}

impl LongShortPortfolio {
    pub fn long_sum(&self) -> f64 {
        self.positions.iter().map(|(_, w)| w.max(0.0)).sum()
    }

    pub fn short_sum(&self) -> f64 {
        self.positions.iter().map(|(_, w)| w.min(0.0)).sum()
    }
}

/// Build the long-short portfolio from scored candidates. `Equal` ignores
/// the magnitudes; `Value` scales within each leg proportionally to them.
pub fn long_short_portfolio(
    longs: &[(AssetId, f64)],
    shorts: &[(AssetId, f64)],
    weighting: LegWeighting,
) -> Result<LongShortPortfolio, BacktestError> {
    if longs.is_empty() {
        return Err(BacktestError::EmptyLeg("long"));
    }
    if shorts.is_empty() {
        return Err(BacktestError::EmptyLeg("short"));
    }
    let leg = |entries: &[(AssetId, f64)],
               sign: f64,
               name: &'static str|
     -> Result<Vec<(AssetId, f64)>, BacktestError> {
        match weighting {
            LegWeighting::Equal => {
                let w = 0.5 / entries.len() as f64;
                Ok(entries.iter().map(|(a, _)| (a.clone(), sign * w)).collect())
            }
            LegWeighting::Value => {
                let total: f64 = entries.iter().map(|(_, m)| m.abs()).sum();
                if total <= 0.0 {
                    return Err(BacktestError::ZeroLegMagnitude(name));
                }
                Ok(entries
                    .iter()
                    .map(|(a, m)| (a.clone(), sign * 0.5 * m.abs() / total))
                    .collect())
            }
        }
    };
    let mut positions = leg(longs, 1.0, "long")?;
    positions.extend(leg(shorts, -1.0, "short")?);
    Ok(LongShortPortfolio { positions })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn asset(s: &str) -> AssetId {
        AssetId::from(s)
    }

    fn month(s: &str) -> Month {
        s.parse().unwrap()
    }

    fn weights(entries: &[(&str, f64)]) -> WeightVector {
        WeightVector::new(
            entries.iter().map(|(a, _)| asset(a)).collect(),
            nalgebra::DVector::from_vec(entries.iter().map(|(_, w)| *w).collect()),
        )
        .unwrap()
    }

    fn returns_map(entries: &[(&str, f64)]) -> BTreeMap<AssetId, f64> {
        entries.iter().map(|(a, r)| (asset(a), *r)).collect()
    }

    #[test]
    fn zero_cost_net_equals_gross() {
        let w_new = weights(&[("A", 0.6), ("B", 0.4)]);
        let w_old = HoldingsState::from_weights(&weights(&[("A", 0.5), ("B", 0.5)]));
        let y = returns_map(&[("A", 0.02), ("B", -0.01)]);
        let out = net_return(&w_new, &w_old, &y, month("2020-02"), 0.0).unwrap();
        assert_eq!(out.net, out.gross);
        assert!((out.gross - (0.5 * 0.02 - 0.5 * 0.01)).abs() < 1e-15);
        assert!(out.turnover > 0.0);
    }

    #[test]
    fn drift_only_rebalance_has_zero_turnover() {
        let w_old = weights(&[("A", 0.5), ("B", 0.5)]);
        let y = returns_map(&[("A", 0.10), ("B", -0.05)]);
        let gross = 0.5 * 0.10 - 0.5 * 0.05;
        let drifted = weights(&[
            ("A", 0.5 * 1.10 / (1.0 + gross)),
            ("B", 0.5 * 0.95 / (1.0 + gross)),
        ]);
        let out = net_return(
            &drifted,
            &HoldingsState::from_weights(&w_old),
            &y,
            month("2020-02"),
            0.001,
        )
        .unwrap();
        assert!(out.turnover.abs() < 1e-12);
        assert!((out.net - out.gross).abs() < 1e-12);
    }

    /// Hand evaluation of the formula: full switch between disjoint
    /// single-asset books with zero returns costs 2 units of turnover.
    #[test]
    fn full_switch_hand_example() {
        let w_new = weights(&[("B", 1.0)]);
        let w_old = HoldingsState::from_weights(&weights(&[("A", 1.0)]));
        let y = returns_map(&[("A", 0.0), ("B", 0.0)]);
        let out = net_return(&w_new, &w_old, &y, month("2020-02"), 0.001).unwrap();
        assert!((out.turnover - 2.0).abs() < 1e-12);
        assert!((out.net - (-0.002)).abs() < 1e-12);
        assert_eq!(out.gross, 0.0);
    }

    #[test]
    fn missing_return_and_wipeout_errors() {
        let w_new = weights(&[("A", 1.0)]);
        let y = returns_map(&[("B", 0.0)]);
        assert!(matches!(
            net_return(&w_new, &HoldingsState::empty(), &y, month("2020-02"), 0.0),
            Err(BacktestError::MissingReturn { .. })
        ));
        // Wipeout: the drifting book loses more than its value.
        let y = returns_map(&[("A", -0.8), ("B", 0.1)]);
        let holder = HoldingsState::from_weights(&weights(&[("A", 2.0), ("B", -1.0)]));
        let w_next = weights(&[("B", 1.0)]);
        assert!(matches!(
            net_return(&w_next, &holder, &y, month("2020-02"), 0.0),
            Err(BacktestError::PortfolioWipedOut { .. })
        ));
    }

    #[test]
    fn turnover_is_bounded_by_gross_books() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(81, "test/backtest/turnover");
        for _ in 0..500 {
            let mut wn: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..2.0)).collect();
            let s: f64 = wn.iter().sum();
            if s.abs() < 0.5 {
                continue;
            }
            wn.iter_mut().for_each(|w| *w /= s);
            let w_new = weights(&[("A", wn[0]), ("B", wn[1]), ("C", wn[2])]);
            let mut wo: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..2.0)).collect();
            let so: f64 = wo.iter().sum();
            if so.abs() < 0.5 {
                continue;
            }
            wo.iter_mut().for_each(|w| *w /= so);
            let w_old = HoldingsState::from_weights(&weights(&[
                ("A", wo[0]),
                ("B", wo[1]),
                ("C", wo[2]),
            ]));
            let y = returns_map(&[
                ("A", rng.gen_range(-0.05..0.05)),
                ("B", rng.gen_range(-0.05..0.05)),
                ("C", rng.gen_range(-0.05..0.05)),
            ]);
            let out = net_return(&w_new, &w_old, &y, month("2020-02"), 0.001).unwrap();
            assert!(out.turnover >= 0.0);
            let gross_new: f64 = w_new.weights.iter().map(|w| w.abs()).sum();
            let gross_old: f64 = w_old
                .positions
                .iter()
                .map(|(a, w)| (w * (1.0 + y[a]) / (1.0 + out.gross)).abs())
                .sum::<f64>();
            assert!(out.turnover <= gross_new + gross_old + 1e-12);
        }
    }

    #[test]
    fn summary_cases() {
        assert!(matches!(
            summarize(&[0.01]),
            Err(BacktestError::TooFewMonths(1))
        ));
        assert!(matches!(
            summarize(&[0.01, 0.01, 0.01]),
            Err(BacktestError::ZeroVariance)
        ));
        let s = summarize(&[0.01, -0.01]).unwrap();
        assert!(s.mu_net.abs() < 1e-18);
        assert!((s.sigma2_net - 0.0002).abs() < 1e-18);
        assert_eq!(s.sr_net, 0.0);
        assert!((s.annualized_variance - 0.0024).abs() < 1e-15);
    }

    /// Naive two-pass oracle over random series.
    #[test]
    fn summary_matches_naive_two_pass() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(82, "test/backtest/summary");
        for _ in 0..1000 {
            let t = rng.gen_range(2..40);
            let series: Vec<f64> = (0..t).map(|_| rng.gen_range(-0.1..0.1)).collect();
            let mut mean = 0.0;
            for r in &series {
                mean += r;
            }
            mean /= t as f64;
            let mut var = 0.0;
            for r in &series {
                var += (r - mean) * (r - mean);
            }
            var /= (t - 1) as f64;
            if var <= 0.0 {
                continue;
            }
            let s = summarize(&series).unwrap();
            assert!((s.mu_net - mean).abs() < 1e-12);
            assert!((s.sigma2_net - var).abs() < 1e-12);
            assert!((s.sr_net - mean / var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn long_short_equal_legs() {
        let longs = vec![(asset("A"), 1.0), (asset("B"), 2.0)];
        let shorts = vec![(asset("C"), 1.0), (asset("D"), 1.0)];
        let book = long_short_portfolio(&longs, &shorts, LegWeighting::Equal).unwrap();
        let w: BTreeMap<_, _> = book.positions.iter().cloned().collect();
        assert_eq!(w[&asset("A")], 0.25);
        assert_eq!(w[&asset("B")], 0.25);
        assert_eq!(w[&asset("C")], -0.25);
        assert_eq!(w[&asset("D")], -0.25);

        let one_long = vec![(asset("A"), 1.0)];
        let three_shorts = vec![
            (asset("B"), 1.0),
            (asset("C"), 1.0),
            (asset("D"), 1.0),
        ];
        let book = long_short_portfolio(&one_long, &three_shorts, LegWeighting::Equal).unwrap();
        let w: BTreeMap<_, _> = book.positions.iter().cloned().collect();
        assert_eq!(w[&asset("A")], 0.5);
        assert!((w[&asset("B")] + 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn long_short_value_leg_sums() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(83, "test/backtest/ls");
        for _ in 0..200 {
            let nl = rng.gen_range(1..6);
            let ns = rng.gen_range(1..6);
            let longs: Vec<(AssetId, f64)> = (0..nl)
                .map(|i| (AssetId::new(format!("L{i}")), rng.gen_range(0.1..5.0)))
                .collect();
            let shorts: Vec<(AssetId, f64)> = (0..ns)
                .map(|i| (AssetId::new(format!("S{i}")), rng.gen_range(0.1..5.0)))
                .collect();
            let book = long_short_portfolio(&longs, &shorts, LegWeighting::Value).unwrap();
            assert!((book.long_sum() - 0.5).abs() < 1e-12);
            assert!((book.short_sum() + 0.5).abs() < 1e-12);
        }
        assert!(matches!(
            long_short_portfolio(&[], &[(asset("S"), 1.0)], LegWeighting::Equal),
            Err(BacktestError::EmptyLeg("long"))
        ));
    }

    #[test]
    fn config_validation() {
        let mut config = BacktestConfig::new(month("2020-01"), month("2020-12"));
        assert!(config.validate().is_ok());
        config.train_window = 12;
        assert!(config.validate().is_err());
        config.train_window = 180;
        config.cost_bp = -1.0;
        assert!(config.validate().is_err());
        config.cost_bp = 10.0;
        config.out_sample_start = month("2021-01");
        assert!(config.validate().is_err());
    }
}
