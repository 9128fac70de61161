//! Panels of monthly excess returns and characteristics, publication lags,
//! cross-sectional rank normalization, and the synthetic generator.

mod synthetic;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

pub use synthetic::{generate_synthetic, BetaFn, NoiseSpec, SyntheticConfig, SyntheticTruth};

use crate::linalg::{Matrix, Vector};
use crate::{Error, Result};

/// Calendar month, formatted `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearMonth {
    year: i32,
    month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) || !(0..=9999).contains(&year) {
            return Err(Error::Data(alloc::format!("invalid month {year}-{month}")));
        }
        Ok(YearMonth { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    /// Months since year 0.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(ordinal: i64) -> Self {
        YearMonth {
            year: ordinal.div_euclid(12) as i32,
            month: ordinal.rem_euclid(12) as u32 + 1,
        }
    }

    pub fn add_months(self, months: i64) -> Self {
        YearMonth::from_ordinal(self.ordinal() + months)
    }

    /// `self - other` in months.
    pub fn months_since(self, other: YearMonth) -> i64 {
        self.ordinal() - other.ordinal()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Data(alloc::format!("invalid date `{s}`, expected YYYY-MM"));
        let b = s.as_bytes();
        if b.len() != 7 || b[4] != b'-' || !b[..4].iter().chain(&b[5..]).all(u8::is_ascii_digit) {
            return Err(bad());
        }
        let year = s[..4].parse().map_err(|_| bad())?;
        let month = s[5..].parse().map_err(|_| bad())?;
        YearMonth::new(year, month).map_err(|_| bad())
    }
}

impl TryFrom<String> for YearMonth {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<YearMonth> for String {
    fn from(d: YearMonth) -> Self {
        alloc::format!("{d}")
    }
}

/// Reporting frequency of a characteristic, which fixes its publication lag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Monthly,
    Quarterly,
    Annual,
}

impl Frequency {
    /// Months between observation and first use: 1, 4 and 12.
    pub fn lag_months(self) -> i64 {
        match self {
            Frequency::Monthly => 1,
            Frequency::Quarterly => 4,
            Frequency::Annual => 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacteristicSpec {
    pub name: String,
    pub frequency: Frequency,
}

/// One (month, asset) row. `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub date: YearMonth,
    pub asset_id: String,
    pub ret_excess: Option<f64>,
    pub characteristics: Vec<Option<f64>>,
}

/// Unlagged panel as recorded: characteristics carry the month they were
/// observed in. Rows are kept sorted by `(date, asset_id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPanel {
    characteristics: Vec<CharacteristicSpec>,
    observations: Vec<Observation>,
}

impl RawPanel {
    /// Validates row widths, finiteness, unique `(date, asset)` keys and a
    /// contiguous monthly date range.
    pub fn new(characteristics: Vec<CharacteristicSpec>, mut observations: Vec<Observation>) -> Result<Self> {
        let p = characteristics.len();
        let mut names = BTreeSet::new();
        for c in &characteristics {
            if !names.insert(c.name.as_str()) {
                return Err(Error::Data(alloc::format!("duplicate characteristic `{}`", c.name)));
            }
        }
        for o in &observations {
            if o.characteristics.len() != p {
                return Err(Error::Data(alloc::format!(
                    "row ({}, {}) has {} characteristics, expected {p}",
                    o.date,
                    o.asset_id,
                    o.characteristics.len()
                )));
            }
            if o.ret_excess.iter().chain(o.characteristics.iter().flatten()).any(|v| !v.is_finite()) {
                return Err(Error::Data(alloc::format!(
                    "row ({}, {}) contains a non-finite value",
                    o.date, o.asset_id
                )));
            }
        }
        observations.sort_by(|a, b| (a.date, &a.asset_id).cmp(&(b.date, &b.asset_id)));
        for w in observations.windows(2) {
            if w[0].date == w[1].date && w[0].asset_id == w[1].asset_id {
                return Err(Error::Data(alloc::format!(
                    "duplicate observation for ({}, {})",
                    w[0].date, w[0].asset_id
                )));
            }
        }
        for w in observations.windows(2) {
            if w[1].date.months_since(w[0].date) > 1 {
                return Err(Error::Data(alloc::format!(
                    "panel dates are not contiguous: no rows between {} and {}",
                    w[0].date, w[1].date
                )));
            }
        }
        Ok(RawPanel {
            characteristics,
            observations,
        })
    }

    pub fn characteristics(&self) -> &[CharacteristicSpec] {
        &self.characteristics
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn into_observations(self) -> Vec<Observation> {
        self.observations
    }

    /// First and last month, if any rows exist.
    pub fn span(&self) -> Option<(YearMonth, YearMonth)> {
        Some((self.observations.first()?.date, self.observations.last()?.date))
    }
}

/// A panel whose characteristic values have been shifted to the month they
/// become usable for predicting returns.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedPanel(RawPanel);

impl LaggedPanel {
    pub fn panel(&self) -> &RawPanel {
        &self.0
    }
}

/// Moves every characteristic value observed at month `s` to the months at
/// and after `s + lag`, carrying the latest available value forward per
/// asset. Returns are never shifted.
pub fn apply_lags(raw: &RawPanel) -> LaggedPanel {
    let lags: Vec<i64> = raw.characteristics.iter().map(|c| c.frequency.lag_months()).collect();
    let mut by_asset: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, o) in raw.observations.iter().enumerate() {
        by_asset.entry(o.asset_id.as_str()).or_default().push(i);
    }
    let mut out = raw.observations.clone();
    for rows in by_asset.values() {
        // rows are date-ordered because observations are sorted
        for (c, &lag) in lags.iter().enumerate() {
            let mut latest: Option<f64> = None;
            let mut next_src = 0;
            for &row in rows {
                let date = raw.observations[row].date;
                while next_src < rows.len() {
                    let src = &raw.observations[rows[next_src]];
                    if src.date.ordinal() + lag > date.ordinal() {
                        break;
                    }
                    if let Some(v) = src.characteristics[c] {
                        latest = Some(v);
                    }
                    next_src += 1;
                }
                out[row].characteristics[c] = latest;
            }
        }
    }
    LaggedPanel(RawPanel {
        characteristics: raw.characteristics.clone(),
        observations: out,
    })
}

/// Cross-sectional ranks mapped to `[-1, 1]`; ties share their average rank,
/// a single observed value maps to 0 and missing values are imputed as 0.
pub fn normalize_slice(values: &[Option<f64>]) -> Vector {
    let mut present: Vec<(f64, usize)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (v, i)))
        .collect();
    let mut out = alloc::vec![0.0; values.len()];
    let n = present.len();
    if n < 2 {
        return out.into();
    }
    present.sort_by(|a, b| a.0.total_cmp(&b.0));
    let scale = 2.0 / (n - 1) as f64;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && present[end].0 == present[start].0 {
            end += 1;
        }
        // zero-based average rank of the tie block
        let rank = (start + end - 1) as f64 / 2.0;
        for &(_, i) in &present[start..end] {
            out[i] = -1.0 + scale * rank;
        }
        start = end;
    }
    out.into()
}

/// One month: returns `r_t` and normalized lagged characteristics `Z_{t-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub date: YearMonth,
    pub asset_ids: Vec<String>,
    pub z: Matrix,
    pub r: Vector,
}

impl Slice {
    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub months: Vec<Slice>,
    pub characteristic_names: Vec<String>,
}

impl PanelDataset {
    /// Slices with `from <= date < to`.
    pub fn window(&self, from: YearMonth, to: YearMonth) -> &[Slice] {
        let a = self.months.partition_point(|s| s.date < from);
        let b = self.months.partition_point(|s| s.date < to);
        &self.months[a..b.max(a)]
    }

    pub fn first_date(&self) -> Option<YearMonth> {
        self.months.first().map(|s| s.date)
    }

    pub fn last_date(&self) -> Option<YearMonth> {
        self.months.last().map(|s| s.date)
    }
}

/// Per month, keeps assets with an observed return and rank-normalizes each
/// characteristic column. Months without any return are skipped.
pub fn build_dataset(lagged: &LaggedPanel) -> PanelDataset {
    let raw = &lagged.0;
    let p = raw.characteristics.len();
    let mut months = Vec::new();
    let obs = &raw.observations;
    let mut start = 0;
    while start < obs.len() {
        let date = obs[start].date;
        let mut end = start;
        while end < obs.len() && obs[end].date == date {
            end += 1;
        }
        let rows: Vec<&Observation> = obs[start..end].iter().filter(|o| o.ret_excess.is_some()).collect();
        start = end;
        if rows.is_empty() {
            log::warn!("{date}: no asset has an observed return; month skipped");
            continue;
        }
        let n = rows.len();
        let mut z = Matrix::zeros(n, p);
        let mut column = Vec::with_capacity(n);
        for c in 0..p {
            column.clear();
            column.extend(rows.iter().map(|o| o.characteristics[c]));
            for (i, v) in normalize_slice(&column).iter().enumerate() {
                z.set(i, c, *v);
            }
        }
        months.push(Slice {
            date,
            asset_ids: rows.iter().map(|o| o.asset_id.clone()).collect(),
            z,
            r: rows.iter().map(|o| o.ret_excess.unwrap_or(0.0)).collect::<Vec<_>>().into(),
        });
    }
    PanelDataset {
        months,
        characteristic_names: raw.characteristics.iter().map(|c| c.name.clone()).collect(),
    }
}
