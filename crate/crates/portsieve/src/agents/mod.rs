//! Screening agents and the consensus decision rule.
//!
//! Each agent maps one information source onto a per-date [`SignalSet`]:
//! scheduled threshold rules, decayed news-sentiment scores, analyst
//! recommendation revisions, a cross-sectional logistic screen, and the
//! profitability-plus-value rank screen. Agents never call external
//! models; sentiment scores and recommendation levels arrive pre-computed
//! in event files.

mod logistic;

pub use logistic::{fit_logistic, logistic_agent, LogisticFit, TrainRow};

use crate::data::{self, AssetId};
use crate::dates::Month;
use crate::rules::{self, RuleError, RulePair};
use crate::signals::{Action, SignalSet};
use chrono::NaiveDate;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Sentiment score threshold: decayed score above buys, below minus it sells.
pub const SENTIMENT_THRESHOLD: f64 = 0.1;
/// Analyst revision threshold on the month-over-month decayed-sum change.
pub const ANALYST_THRESHOLD: f64 = 0.5;
/// Default decay half-life for event staleness, in days.
pub const DEFAULT_HALF_LIFE_DAYS: f64 = 7.0;
/// Buy/sell fraction for the rank screen (150 out of 500).
pub const RANK_SCREEN_FRACTION: f64 = 0.3;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("half-life must be positive, got {0}")]
    NonPositiveHalfLife(f64),
    #[error("event for {asset} dated {timestamp} falls after month end {month_end}")]
    EventAfterMonthEnd {
        asset: AssetId,
        timestamp: NaiveDate,
        month_end: NaiveDate,
    },
    #[error("consensus requires 2 or 3 signal sets, got {0}")]
    BadEnsembleSize(usize),
    #[error("signal sets dated {0} and {1} cannot be combined")]
    MismatchedDates(Month, Month),
    #[error("designated agent index {index} out of range for {len} agents")]
    DesignatedAgentOutOfRange { index: usize, len: usize },
    #[error("rank screen needs at least {required} assets with both metrics, got {actual}")]
    TooFewRanked { required: usize, actual: usize },
    #[error("logistic screen needs at least {required} labeled observations, got {actual}")]
    TooFewObservations { required: usize, actual: usize },
    #[error("logistic regression did not converge after {iterations} iterations (step sizes: {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },
    #[error("perfect separation: {0}")]
    PerfectSeparation(String),
    #[error("feature `{feature}` missing for asset {asset} at {date}")]
    MissingFeature {
        feature: String,
        asset: AssetId,
        date: Month,
    },
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Data(#[from] data::DataError),
}

/// A dated scalar observation for one asset: a per-article sentiment score
/// in [-1, 1], or an analyst recommendation level.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEvent {
    pub asset: AssetId,
    pub timestamp: NaiveDate,
    pub value: f64,
}

/// A pile of scored events, queryable by month.
#[derive(Debug, Clone, Default)]
pub struct EventPanel {
    events: Vec<ScoredEvent>,
}

impl EventPanel {
    pub fn new(events: Vec<ScoredEvent>) -> EventPanel {
        EventPanel { events }
    }

    /// Events falling inside `month`, grouped by asset.
    pub fn month_events(&self, month: Month) -> BTreeMap<AssetId, Vec<ScoredEvent>> {
        let mut out: BTreeMap<AssetId, Vec<ScoredEvent>> = BTreeMap::new();
        for e in &self.events {
            if Month::containing(e.timestamp) == month {
                out.entry(e.asset.clone()).or_default().push(e.clone());
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Load a `date,asset,<value>` event file with day-level `YYYY-MM-DD`
/// dates. `value_header` is `score` for sentiment files and
/// `recommendation` for analyst files.
pub fn load_event_panel(
    path: impl AsRef<Path>,
    value_header: &str,
) -> Result<EventPanel, data::DataError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| data::DataError::Io {
        path: display.clone(),
        source,
    })?;
    let header = format!("date,asset,{value_header}");
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if idx == 0 {
            data::expect_header(raw, &header, &display, line)?;
            continue;
        }
        if raw.trim().is_empty() {
            continue;
        }
        let fields = data::split_fields(raw, 3, &display, line)?;
        let timestamp = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d").map_err(|e| {
            data::DataError::Parse {
                path: display.clone(),
                line,
                message: format!("invalid date `{}`: {e}", fields[0]),
            }
        })?;
        let asset = AssetId::new(fields[1]);
        let value = data::parse_float(fields[2], value_header, &display, line)?;
        events.push(ScoredEvent {
            asset,
            timestamp,
            value,
        });
    }
    Ok(EventPanel::new(events))
}

/// Exponentially decayed sum of event values at `month_end`:
/// sum_i value_i * 2^(-age_i / half_life) with age_i in days.
pub fn decay_weighted_sum(
    events: &[ScoredEvent],
    month_end: NaiveDate,
    half_life_days: f64,
) -> Result<f64, AgentError> {
    if half_life_days.is_nan() || half_life_days <= 0.0 {
        return Err(AgentError::NonPositiveHalfLife(half_life_days));
    }
    let mut total = 0.0;
    for e in events {
        let age = (month_end - e.timestamp).num_days();
        if age < 0 {
            return Err(AgentError::EventAfterMonthEnd {
                asset: e.asset.clone(),
                timestamp: e.timestamp,
                month_end,
            });
        }
        total += e.value * (-(age as f64) / half_life_days).exp2();
    }
    Ok(total)
}

/// News-sentiment screen: buy when the decayed month score exceeds
/// [`SENTIMENT_THRESHOLD`], sell when below its negative, hold otherwise
/// (boundaries hold — the comparisons are strict).
pub fn sentiment_agent(
    scores: &BTreeMap<AssetId, Vec<ScoredEvent>>,
    month: Month,
    half_life_days: f64,
) -> Result<SignalSet, AgentError> {
    let month_end = month.last_day();
    let mut set = SignalSet::new(month);
    for (asset, events) in scores {
        let s = decay_weighted_sum(events, month_end, half_life_days)?;
        let action = if s > SENTIMENT_THRESHOLD {
            Action::Buy
        } else if s < -SENTIMENT_THRESHOLD {
            Action::Sell
        } else {
            Action::Hold
        };
        set.set(asset.clone(), action);
    }
    Ok(set)
}

/// Analyst-revision screen: a rising decayed recommendation sum (change
/// above [`ANALYST_THRESHOLD`]) sells, a falling one (below the negative)
/// buys. Recommendation levels grow worse upward, hence the sign.
pub fn analyst_agent(
    current: &BTreeMap<AssetId, Vec<ScoredEvent>>,
    previous: &BTreeMap<AssetId, Vec<ScoredEvent>>,
    current_month: Month,
    previous_month: Month,
) -> Result<SignalSet, AgentError> {
    let cur_end = current_month.last_day();
    let prev_end = previous_month.last_day();
    let universe: BTreeSet<&AssetId> = current.keys().chain(previous.keys()).collect();
    let empty: Vec<ScoredEvent> = Vec::new();
    let mut set = SignalSet::new(current_month);
    for asset in universe {
        let cur = decay_weighted_sum(
            current.get(asset).unwrap_or(&empty),
            cur_end,
            DEFAULT_HALF_LIFE_DAYS,
        )?;
        let prev = decay_weighted_sum(
            previous.get(asset).unwrap_or(&empty),
            prev_end,
            DEFAULT_HALF_LIFE_DAYS,
        )?;
        let delta = cur - prev;
        let action = if delta > ANALYST_THRESHOLD {
            Action::Sell
        } else if delta < -ANALYST_THRESHOLD {
            Action::Buy
        } else {
            Action::Hold
        };
        set.set(asset.clone(), action);
    }
    Ok(set)
}

/// Profitability-plus-value rank screen: assets are ranked on each metric
/// (higher better, ties broken by identifier), rank sums sorted, and the
/// top and bottom `ceil(0.3 * universe_size)` become buys and sells. For a
/// 500-asset universe that is the classic 150/150 split.
pub fn novy_marx_agent(
    profitability: &BTreeMap<AssetId, f64>,
    bm: &BTreeMap<AssetId, f64>,
    universe_size: usize,
    date: Month,
) -> Result<SignalSet, AgentError> {
    let ranked: Vec<&AssetId> = profitability
        .keys()
        .filter(|a| bm.contains_key(*a))
        .collect();
    let leg = (RANK_SCREEN_FRACTION * universe_size as f64).ceil() as usize;
    if ranked.len() < 2 * leg {
        return Err(AgentError::TooFewRanked {
            required: 2 * leg,
            actual: ranked.len(),
        });
    }

    let rank_of = |metric: &BTreeMap<AssetId, f64>| -> BTreeMap<AssetId, usize> {
        let mut order: Vec<&AssetId> = ranked.clone();
        order.sort_by(|a, b| {
            metric[*a]
                .partial_cmp(&metric[*b])
                .expect("finite metric")
                .then_with(|| a.cmp(b))
        });
        order
            .into_iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i + 1))
            .collect()
    };
    let prof_rank = rank_of(profitability);
    let bm_rank = rank_of(bm);

    let mut combined: Vec<(&AssetId, usize)> = ranked
        .iter()
        .map(|a| (*a, prof_rank[*a] + bm_rank[*a]))
        .collect();
    // Highest combined rank first; identifier breaks ties deterministically.
    combined.sort_by(|(a, ra), (b, rb)| rb.cmp(ra).then_with(|| a.cmp(b)));

    let mut set = SignalSet::new(date);
    for (a, _) in combined.iter().take(leg) {
        set.set((*a).clone(), Action::Buy);
    }
    for (a, _) in combined.iter().rev().take(leg) {
        set.set((*a).clone(), Action::Sell);
    }
    Ok(set)
}

/// Scheduled-rule screen: applies the rule pair effective at `date` to the
/// cross-section.
pub fn rule_agent(
    schedule: &[RulePair],
    date: Month,
    cross_section: &BTreeMap<AssetId, BTreeMap<String, f64>>,
) -> Result<SignalSet, AgentError> {
    let pair = rules::effective_rule(schedule, date)?;
    Ok(rules::apply_rules(pair, date, cross_section)?)
}

/// What to do when a two-agent intersection has at most one element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    /// Keep every asset with a non-hold signal from either agent, dropping
    /// assets the two agents push in opposite directions.
    Union,
    /// Return the designated agent's signal set verbatim.
    DesignatedAgent(usize),
}

/// Per-date consensus diagnostics carried into the backtest audit log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct ConsensusAudit {
    pub intersection_size: usize,
    pub fallback_used: bool,
    pub conflicts_dropped: usize,
}

/// Combine agent signal sets under the consensus decision rule.
///
/// Two agents: an asset survives when both assign the same non-hold
/// action; if the signed intersection has at most one element the
/// `fallback` applies. Three agents: majority vote — an asset gets an
/// action assigned by at least two agents. Disagreement in direction is
/// exclusion in every mode.
pub fn combine_consensus(
    sets: &[SignalSet],
    fallback: Fallback,
) -> Result<(SignalSet, ConsensusAudit), AgentError> {
    match sets.len() {
        2 => {
            let (s1, s2) = (&sets[0], &sets[1]);
            if s1.date != s2.date {
                return Err(AgentError::MismatchedDates(s1.date, s2.date));
            }
            if let Fallback::DesignatedAgent(i) = fallback {
                if i >= sets.len() {
                    return Err(AgentError::DesignatedAgentOutOfRange {
                        index: i,
                        len: sets.len(),
                    });
                }
            }
            let union: BTreeSet<AssetId> = s1
                .non_hold()
                .chain(s2.non_hold())
                .map(|(a, _)| a.clone())
                .collect();

            let mut intersection = SignalSet::new(s1.date);
            for a in &union {
                let (a1, a2) = (s1.action(a), s2.action(a));
                if a1 == a2 && a1 != Action::Hold {
                    intersection.set(a.clone(), a1);
                }
            }
            let intersection_size = intersection.len();
            if intersection_size > 1 {
                return Ok((
                    intersection,
                    ConsensusAudit {
                        intersection_size,
                        fallback_used: false,
                        conflicts_dropped: 0,
                    },
                ));
            }
            match fallback {
                Fallback::DesignatedAgent(i) => Ok((
                    sets[i].clone(),
                    ConsensusAudit {
                        intersection_size,
                        fallback_used: true,
                        conflicts_dropped: 0,
                    },
                )),
                Fallback::Union => {
                    let mut out = SignalSet::new(s1.date);
                    let mut conflicts = 0usize;
                    for a in &union {
                        let (a1, a2) = (s1.action(a), s2.action(a));
                        match (a1, a2) {
                            (Action::Hold, x) | (x, Action::Hold) => out.set(a.clone(), x),
                            (x, y) if x == y => out.set(a.clone(), x),
                            _ => conflicts += 1,
                        }
                    }
                    Ok((
                        out,
                        ConsensusAudit {
                            intersection_size,
                            fallback_used: true,
                            conflicts_dropped: conflicts,
                        },
                    ))
                }
            }
        }
        3 => {
            if sets[1].date != sets[0].date || sets[2].date != sets[0].date {
                let other = if sets[1].date != sets[0].date {
                    sets[1].date
                } else {
                    sets[2].date
                };
                return Err(AgentError::MismatchedDates(sets[0].date, other));
            }
            let union: BTreeSet<AssetId> = sets
                .iter()
                .flat_map(|s| s.non_hold().map(|(a, _)| a.clone()))
                .collect();
            let mut out = SignalSet::new(sets[0].date);
            for a in &union {
                let buys = sets.iter().filter(|s| s.action(a) == Action::Buy).count();
                let sells = sets.iter().filter(|s| s.action(a) == Action::Sell).count();
                if buys >= 2 {
                    out.set(a.clone(), Action::Buy);
                } else if sells >= 2 {
                    out.set(a.clone(), Action::Sell);
                }
            }
            let size = out.len();
            Ok((
                out,
                ConsensusAudit {
                    intersection_size: size,
                    fallback_used: false,
                    conflicts_dropped: 0,
                },
            ))
        }
        n => Err(AgentError::BadEnsembleSize(n)),
    }
}
