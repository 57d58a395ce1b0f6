//! Buy/sell/hold signal sets shared by every screening agent.

use crate::data::AssetId;
use crate::dates::Month;
use std::collections::BTreeMap;

/// A screening decision for one asset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Action {
    Buy,
    Sell,
    Hold,
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Action::Buy => "buy",
            Action::Sell => "sell",
            Action::Hold => "hold",
        })
    }
}

/// Per-date signal map. Only non-hold entries are stored; an absent asset
/// is implicitly [`Action::Hold`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalSet {
    pub date: Month,
    signals: BTreeMap<AssetId, Action>,
}

impl SignalSet {
    pub fn new(date: Month) -> SignalSet {
        SignalSet {
            date,
            signals: BTreeMap::new(),
        }
    }

    /// Record a decision; `Hold` erases any stored entry.
    pub fn set(&mut self, asset: AssetId, action: Action) {
        match action {
            Action::Hold => {
                self.signals.remove(&asset);
            }
            other => {
                self.signals.insert(asset, other);
            }
        }
    }

    pub fn action(&self, asset: &AssetId) -> Action {
        self.signals.get(asset).copied().unwrap_or(Action::Hold)
    }

    /// Non-hold entries in asset order.
    pub fn non_hold(&self) -> impl Iterator<Item = (&AssetId, Action)> {
        self.signals.iter().map(|(a, &s)| (a, s))
    }

    /// Assets with a buy or sell signal, in order.
    pub fn screened_assets(&self) -> Vec<AssetId> {
        self.signals.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn buys(&self) -> Vec<AssetId> {
        self.signals
            .iter()
            .filter(|(_, &s)| s == Action::Buy)
            .map(|(a, _)| a.clone())
            .collect()
    }

    pub fn sells(&self) -> Vec<AssetId> {
        self.signals
            .iter()
            .filter(|(_, &s)| s == Action::Sell)
            .map(|(a, _)| a.clone())
            .collect()
    }
}
