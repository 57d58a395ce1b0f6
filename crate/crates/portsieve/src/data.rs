//! Return and characteristic panels: ingestion, validation,
//! cross-sectional standardization, and window extraction.
//!
//! File formats are delimited UTF-8 text with LF line endings:
//!
//! * returns — header `date,asset,ret`, dates `YYYY-MM`, simple monthly
//!   returns;
//! * characteristics — header `date,asset,feature,value`, an empty `value`
//!   field meaning missing.

use crate::dates::Month;
use nalgebra::DMatrix;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

/// Opaque asset identifier. Ordering is lexicographic and is the
/// deterministic tie-breaker everywhere one is needed.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct AssetId(String);

impl AssetId {
    pub fn new(id: impl Into<String>) -> AssetId {
        AssetId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<&str> for AssetId {
    fn from(s: &str) -> AssetId {
        AssetId(s.to_string())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate key ({date}, {asset})")]
    DuplicateKey {
        path: String,
        line: usize,
        date: Month,
        asset: AssetId,
    },
    #[error("{path}:{line}: return {value} out of range (must be finite and > -1)")]
    ReturnOutOfRange {
        path: String,
        line: usize,
        value: f64,
    },
    #[error("characteristic group ({date}, {feature}) has {observed} non-missing values; at least 2 required")]
    InsufficientGroup {
        date: Month,
        feature: String,
        observed: usize,
    },
    #[error("characteristic group ({date}, {feature}) has zero variance after winsorization")]
    ZeroVariance { date: Month, feature: String },
    #[error("window length {0} is too short; at least 2 months required")]
    WindowTooShort(usize),
    #[error("end date {0} has no observations in the returns panel")]
    EndDateAbsent(Month),
    #[error("no requested asset has full coverage over the {length}-month window ending {end}")]
    EmptyWindow { end: Month, length: usize },
}

/// One monthly return observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnObs {
    pub date: Month,
    pub asset: AssetId,
    pub ret: f64,
}

/// Long-format monthly return panel keyed by (date, asset).
///
/// At most one observation per key; returns are finite and greater than
/// -1. Gaps in an asset's month sequence are treated as membership
/// boundaries.
#[derive(Debug, Clone, Default)]
pub struct ReturnsPanel {
    by_asset: BTreeMap<AssetId, BTreeMap<Month, f64>>,
    dates: BTreeSet<Month>,
}

impl ReturnsPanel {
    pub fn from_observations(
        obs: impl IntoIterator<Item = ReturnObs>,
    ) -> Result<ReturnsPanel, DataError> {
        let mut panel = ReturnsPanel::default();
        for (i, o) in obs.into_iter().enumerate() {
            panel.insert(o, "<memory>", i + 1)?;
        }
        Ok(panel)
    }

    fn insert(&mut self, o: ReturnObs, path: &str, line: usize) -> Result<(), DataError> {
        if !o.ret.is_finite() || o.ret <= -1.0 {
            return Err(DataError::ReturnOutOfRange {
                path: path.to_string(),
                line,
                value: o.ret,
            });
        }
        let per_asset = self.by_asset.entry(o.asset.clone()).or_default();
        if per_asset.insert(o.date, o.ret).is_some() {
            return Err(DataError::DuplicateKey {
                path: path.to_string(),
                line,
                date: o.date,
                asset: o.asset,
            });
        }
        self.dates.insert(o.date);
        Ok(())
    }

    pub fn get(&self, date: Month, asset: &AssetId) -> Option<f64> {
        self.by_asset.get(asset).and_then(|m| m.get(&date)).copied()
    }

    pub fn assets(&self) -> impl Iterator<Item = &AssetId> {
        self.by_asset.keys()
    }

    pub fn dates(&self) -> impl Iterator<Item = Month> + '_ {
        self.dates.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.by_asset.values().map(|m| m.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_asset.is_empty()
    }

    pub fn contains_date(&self, date: Month) -> bool {
        self.dates.contains(&date)
    }

    /// Assets with an observation at `date`.
    pub fn assets_at(&self, date: Month) -> Vec<AssetId> {
        self.by_asset
            .iter()
            .filter(|(_, m)| m.contains_key(&date))
            .map(|(a, _)| a.clone())
            .collect()
    }
}

/// Parse a returns file with header `date,asset,ret`.
pub fn load_returns_panel(path: impl AsRef<Path>) -> Result<ReturnsPanel, DataError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: display.clone(),
        source,
    })?;
    let mut panel = ReturnsPanel::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if idx == 0 {
            expect_header(raw, "date,asset,ret", &display, line)?;
            continue;
        }
        if raw.trim().is_empty() {
            continue;
        }
        let fields = split_fields(raw, 3, &display, line)?;
        let date = parse_month(fields[0], &display, line)?;
        let asset = AssetId::new(fields[1]);
        let ret = parse_float(fields[2], "ret", &display, line)?;
        panel.insert(ReturnObs { date, asset, ret }, &display, line)?;
    }
    Ok(panel)
}

/// One per-(date, asset, feature) characteristic value. `None` means
/// missing in the source data.
#[derive(Debug, Clone, PartialEq)]
pub struct CharObs {
    pub date: Month,
    pub asset: AssetId,
    pub feature: String,
    pub value: Option<f64>,
    /// Set by standardization when a missing value was imputed to zero.
    pub imputed: bool,
}

/// Long-format characteristics panel.
#[derive(Debug, Clone, Default)]
pub struct CharacteristicsPanel {
    pub observations: Vec<CharObs>,
}

impl CharacteristicsPanel {
    pub fn from_observations(observations: Vec<CharObs>) -> CharacteristicsPanel {
        CharacteristicsPanel { observations }
    }

    /// Feature rows for one date: asset -> feature -> value. Missing
    /// values are skipped.
    pub fn cross_section(&self, date: Month) -> BTreeMap<AssetId, BTreeMap<String, f64>> {
        let mut out: BTreeMap<AssetId, BTreeMap<String, f64>> = BTreeMap::new();
        for o in self.observations.iter().filter(|o| o.date == date) {
            if let Some(v) = o.value {
                out.entry(o.asset.clone())
                    .or_default()
                    .insert(o.feature.clone(), v);
            }
        }
        out
    }

    pub fn dates(&self) -> BTreeSet<Month> {
        self.observations.iter().map(|o| o.date).collect()
    }
}

/// Parse a characteristics file with header `date,asset,feature,value`.
pub fn load_characteristics_panel(
    path: impl AsRef<Path>,
) -> Result<CharacteristicsPanel, DataError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: display.clone(),
        source,
    })?;
    let mut observations = Vec::new();
    let mut seen: BTreeSet<(Month, AssetId, String)> = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if idx == 0 {
            expect_header(raw, "date,asset,feature,value", &display, line)?;
            continue;
        }
        if raw.trim().is_empty() {
            continue;
        }
        let fields = split_fields(raw, 4, &display, line)?;
        let date = parse_month(fields[0], &display, line)?;
        let asset = AssetId::new(fields[1]);
        let feature = fields[2].to_string();
        let value = if fields[3].is_empty() {
            None
        } else {
            Some(parse_float(fields[3], "value", &display, line)?)
        };
        if !seen.insert((date, asset.clone(), feature.clone())) {
            return Err(DataError::DuplicateKey {
                path: display,
                line,
                date,
                asset,
            });
        }
        observations.push(CharObs {
            date,
            asset,
            feature,
            value,
            imputed: false,
        });
    }
    Ok(CharacteristicsPanel { observations })
}

/// Winsorize each (date, feature) cross-section at its empirical 1st/99th
/// percentiles, z-score it, and impute missing values to exactly zero.
///
/// Percentiles interpolate linearly between order statistics; the z-score
/// uses the sample standard deviation (denominator N-1) over non-missing
/// values. Imputation happens after standardization, so an imputed entry
/// sits at the cross-sectional mean.
pub fn winsorize_standardize(
    raw: &CharacteristicsPanel,
) -> Result<CharacteristicsPanel, DataError> {
    let mut groups: BTreeMap<(Month, String), Vec<usize>> = BTreeMap::new();
    for (i, o) in raw.observations.iter().enumerate() {
        groups
            .entry((o.date, o.feature.clone()))
            .or_default()
            .push(i);
    }

    let mut out = raw.observations.clone();
    for ((date, feature), idxs) in groups {
        let observed: Vec<f64> = idxs
            .iter()
            .filter_map(|&i| raw.observations[i].value)
            .collect();
        if observed.len() < 2 {
            return Err(DataError::InsufficientGroup {
                date,
                feature,
                observed: observed.len(),
            });
        }
        let lo = percentile_linear(&observed, 0.01);
        let hi = percentile_linear(&observed, 0.99);
        let clipped: Vec<f64> = observed.iter().map(|&v| v.clamp(lo, hi)).collect();
        let n = clipped.len() as f64;
        let mean = clipped.iter().sum::<f64>() / n;
        let var = clipped.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        if sd.is_nan() || sd <= 0.0 || !sd.is_finite() {
            return Err(DataError::ZeroVariance { date, feature });
        }
        for &i in &idxs {
            let o = &mut out[i];
            match o.value {
                Some(v) => {
                    o.value = Some((v.clamp(lo, hi) - mean) / sd);
                    o.imputed = false;
                }
                None => {
                    o.value = Some(0.0);
                    o.imputed = true;
                }
            }
        }
    }
    Ok(CharacteristicsPanel { observations: out })
}

/// q-th percentile (q in [0,1]) by linear interpolation between order
/// statistics, position q*(m-1) on the sorted sample.
pub fn percentile_linear(values: &[f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Dense complete-case window of returns: `values[(t, j)]` is the return
/// of `assets[j]` in `dates[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsMatrix {
    pub assets: Vec<AssetId>,
    pub dates: Vec<Month>,
    /// n x p, rows are months in ascending date order.
    pub values: DMatrix<f64>,
}

impl ReturnsMatrix {
    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.values.ncols()
    }

    /// Column means.
    pub fn means(&self) -> Vec<f64> {
        (0..self.n_assets())
            .map(|j| self.values.column(j).sum() / self.n_obs() as f64)
            .collect()
    }

    /// Copy with each column demeaned.
    pub fn demeaned(&self) -> DMatrix<f64> {
        let mut m = self.values.clone();
        for j in 0..m.ncols() {
            let mean = m.column(j).sum() / m.nrows() as f64;
            for t in 0..m.nrows() {
                m[(t, j)] -= mean;
            }
        }
        m
    }

    /// Restrict to a subset of assets (order preserved).
    pub fn select_assets(&self, keep: &[AssetId]) -> ReturnsMatrix {
        let cols: Vec<usize> = keep
            .iter()
            .filter_map(|a| self.assets.iter().position(|b| b == a))
            .collect();
        let mut values = DMatrix::zeros(self.n_obs(), cols.len());
        for (jj, &j) in cols.iter().enumerate() {
            values.set_column(jj, &self.values.column(j));
        }
        ReturnsMatrix {
            assets: cols.iter().map(|&j| self.assets[j].clone()).collect(),
            dates: self.dates.clone(),
            values,
        }
    }
}

/// Result of [`align_window`]: the complete-case matrix plus the assets
/// dropped for incomplete coverage.
#[derive(Debug, Clone)]
pub struct WindowReport {
    pub matrix: ReturnsMatrix,
    pub dropped: Vec<AssetId>,
}

/// Extract the `length`-month window ending at `end_date`, restricted to
/// `assets` with complete coverage. Assets missing any in-window month are
/// dropped and reported.
pub fn align_window(
    panel: &ReturnsPanel,
    end_date: Month,
    length: usize,
    assets: &[AssetId],
) -> Result<WindowReport, DataError> {
    if length < 2 {
        return Err(DataError::WindowTooShort(length));
    }
    if !panel.contains_date(end_date) {
        return Err(DataError::EndDateAbsent(end_date));
    }
    let start = end_date.add_months(-(length as i32 - 1));
    let dates: Vec<Month> = Month::range_inclusive(start, end_date).collect();

    let mut kept: Vec<AssetId> = Vec::new();
    let mut dropped: Vec<AssetId> = Vec::new();
    for a in assets {
        if dates.iter().all(|&d| panel.get(d, a).is_some()) {
            kept.push(a.clone());
        } else {
            dropped.push(a.clone());
        }
    }
    if kept.is_empty() {
        return Err(DataError::EmptyWindow {
            end: end_date,
            length,
        });
    }
    let mut values = DMatrix::zeros(dates.len(), kept.len());
    for (j, a) in kept.iter().enumerate() {
        for (t, &d) in dates.iter().enumerate() {
            values[(t, j)] = panel.get(d, a).expect("coverage checked");
        }
    }
    Ok(WindowReport {
        matrix: ReturnsMatrix {
            assets: kept,
            dates,
            values,
        },
        dropped,
    })
}

pub(crate) fn expect_header(raw: &str, want: &str, path: &str, line: usize) -> Result<(), DataError> {
    if raw.trim_end() != want {
        return Err(DataError::Parse {
            path: path.to_string(),
            line,
            message: format!("expected header `{want}`, found `{raw}`"),
        });
    }
    Ok(())
}

pub(crate) fn split_fields<'a>(
    raw: &'a str,
    want: usize,
    path: &str,
    line: usize,
) -> Result<Vec<&'a str>, DataError> {
    let fields: Vec<&str> = raw.split(',').map(|f| f.trim()).collect();
    if fields.len() != want {
        return Err(DataError::Parse {
            path: path.to_string(),
            line,
            message: format!("expected {want} comma-separated fields, found {}", fields.len()),
        });
    }
    Ok(fields)
}

fn parse_month(s: &str, path: &str, line: usize) -> Result<Month, DataError> {
    s.parse().map_err(|e: crate::dates::MonthParseError| DataError::Parse {
        path: path.to_string(),
        line,
        message: e.to_string(),
    })
}

pub(crate) fn parse_float(s: &str, field: &str, path: &str, line: usize) -> Result<f64, DataError> {
    let v: f64 = s.parse().map_err(|_| DataError::Parse {
        path: path.to_string(),
        line,
        message: format!("invalid {field} `{s}`"),
    })?;
    if !v.is_finite() {
        return Err(DataError::Parse {
            path: path.to_string(),
            line,
            message: format!("non-finite {field} `{s}`"),
        });
    }
    Ok(v)
}
