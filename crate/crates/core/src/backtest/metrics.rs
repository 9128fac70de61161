//! Pooled R-squared (un-demeaned) and long-short decile Sharpe ratios.

use alloc::vec::Vec;

use super::PredictionRecord;
use crate::linalg::Vector;
use crate::math;
use crate::{Error, Result};

/// Minimum cross-section for a month to enter the long-short portfolio.
pub const MIN_ASSETS_PER_MONTH: usize = 10;

/// `100 (1 - sum (r - r_hat)^2 / sum r^2)` over `(predicted, realized)`
/// pairs pooled across assets and months.
fn pooled_r2_pct(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<f64> {
    let mut sse = 0.0;
    let mut ss = 0.0;
    let mut count = 0usize;
    for (pred, actual) in pairs {
        let e = actual - pred;
        sse += e * e;
        ss += actual * actual;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Empty("R-squared inputs"));
    }
    if ss == 0.0 {
        return Err(Error::Degenerate("all realized returns are zero"));
    }
    Ok(100.0 * (1.0 - sse / ss))
}

/// Total R-squared in percent. Predictions use the contemporaneous fitted
/// factors, `r_hat_t = beta(Z_{t-1}) f_hat_t`.
pub fn total_r2(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<f64> {
    pooled_r2_pct(pairs)
}

/// Predictive R-squared in percent. Predictions use the prevailing factor
/// mean, `beta(Z_{t-1}) lambda_hat_t`, known before month `t`.
pub fn predictive_r2(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<f64> {
    pooled_r2_pct(pairs)
}

/// Element-wise mean of fitted factor realizations.
pub fn prevailing_mean(factors: &[Vector]) -> Result<Vector> {
    let first = factors.first().ok_or(Error::Empty("factor history"))?;
    let mut mean = Vector::zeros(first.len());
    for f in factors {
        if f.len() != mean.len() {
            return Err(Error::shape("prevailing_mean", mean.len(), f.len()));
        }
        for (m, v) in mean.iter_mut().zip(f.iter()) {
            *m += v;
        }
    }
    let n = factors.len() as f64;
    for m in mean.iter_mut() {
        *m /= n;
    }
    Ok(mean)
}

/// `mean / std * sqrt(12)` with the population standard deviation.
pub fn sharpe_ratio(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::Degenerate("Sharpe ratio needs at least two periods"));
    }
    if series.iter().all(|&v| v == series[0]) {
        return Err(Error::Degenerate("spread series has zero volatility"));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = math::sqrt(var);
    if std == 0.0 {
        return Err(Error::Degenerate("spread series has zero volatility"));
    }
    Ok(mean / std * math::sqrt(12.0))
}

/// Equal-weighted top-minus-bottom decile return for one month, ranking by
/// `predicted` (descending) with ties broken by asset id.
pub fn decile_spread(asset_ids: &[&str], predicted: &[f64], realized: &[f64]) -> Option<f64> {
    let n = predicted.len();
    if n < MIN_ASSETS_PER_MONTH {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        predicted[b]
            .total_cmp(&predicted[a])
            .then_with(|| asset_ids[a].cmp(asset_ids[b]))
    });
    let count = n / 10;
    let long = order[..count].iter().map(|&i| realized[i]).sum::<f64>() / count as f64;
    let short = order[n - count..].iter().map(|&i| realized[i]).sum::<f64>() / count as f64;
    Some(long - short)
}

/// Monthly long-short spreads from date-ordered forecast records; months
/// with fewer than [`MIN_ASSETS_PER_MONTH`] assets are skipped.
pub fn long_short_spreads(records: &[PredictionRecord]) -> Vec<f64> {
    let mut spreads = Vec::new();
    for month in records.chunk_by(|a, b| a.date == b.date) {
        let ids: Vec<&str> = month.iter().map(|r| r.asset_id.as_str()).collect();
        let pred: Vec<f64> = month.iter().map(|r| r.forecast).collect();
        let real: Vec<f64> = month.iter().map(|r| r.realized).collect();
        match decile_spread(&ids, &pred, &real) {
            Some(s) => spreads.push(s),
            None => log::warn!(
                "{}: only {} assets, skipped in the long-short portfolio",
                month[0].date,
                month.len()
            ),
        }
    }
    spreads
}

/// Annualized Sharpe ratio of the long-short decile portfolio.
pub fn sharpe_long_short(records: &[PredictionRecord]) -> Result<f64> {
    sharpe_ratio(&long_short_spreads(records))
}
