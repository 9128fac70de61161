//! Training, ridge-penalty selection, the recursive rolling backtest and its
//! evaluation metrics.
//!
//! Each refit trains on an expanding window, selects the ridge penalty on a
//! fixed-length validation window immediately before the refit date, then
//! predicts the following `refit_step` months out of sample.

pub mod metrics;
mod optim;
mod rolling;
mod train;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use metrics::{predictive_r2, prevailing_mean, sharpe_long_short, sharpe_ratio, total_r2};
pub use optim::{adam_step, AdamConfig, OptimizerState};
pub use rolling::{fit_window, rolling_backtest, FitWindow};
pub use train::{evaluate_loss, select_lambda, train_model, LambdaSelection, LossPoint, TrainOutcome};

use crate::data::YearMonth;
use crate::factor_model::ConditionalAutoencoder;
use crate::linalg::Vector;
use crate::nets::NetKind;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Non-improving validation epochs tolerated before stopping; 0 disables
    /// early stopping.
    pub patience: usize,
    pub batch_months: usize,
    pub seed: u64,
    pub lambda_grid: Vec<f64>,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            learning_rate: adam.learning_rate,
            max_epochs: 200,
            patience: 10,
            batch_months: 4,
            seed: 0,
            lambda_grid: alloc::vec![0.01, 0.1, 1.0],
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(alloc::format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.patience > self.max_epochs {
            return bad(alloc::format!(
                "patience ({}) exceeds max_epochs ({})",
                self.patience, self.max_epochs
            ));
        }
        if self.batch_months == 0 {
            return bad("batch_months must be at least 1".into());
        }
        if self.lambda_grid.is_empty() {
            return bad("lambda_grid must not be empty".into());
        }
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("lambda_grid entries must be finite and non-negative".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return bad("Adam needs beta1, beta2 in [0, 1) and eps > 0".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Train / validation / test layout. Refits happen every `refit_step` months
/// from `test_start` through `test_end` (inclusive); each trains on
/// `[train_start, refit - val_months)` and validates on
/// `[refit - val_months, refit)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_start: YearMonth,
    pub val_months: u32,
    pub test_start: YearMonth,
    pub test_end: YearMonth,
    pub refit_step: u32,
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        if self.val_months == 0 || self.refit_step == 0 {
            return Err(Error::InvalidArgument("val_months and refit_step must be at least 1".into()));
        }
        if self.train_end_initial() <= self.train_start {
            return Err(Error::InvalidArgument(alloc::format!(
                "no training months: train_start {} is not before the first validation month {}",
                self.train_start,
                self.train_end_initial()
            )));
        }
        if self.test_end < self.test_start {
            return Err(Error::InvalidArgument(alloc::format!(
                "test_end {} precedes test_start {}",
                self.test_end, self.test_start
            )));
        }
        Ok(())
    }

    /// End (exclusive) of the first training window.
    pub fn train_end_initial(&self) -> YearMonth {
        self.test_start.add_months(-(self.val_months as i64))
    }

    pub fn refit_count(&self) -> usize {
        (self.test_end.months_since(self.test_start) / self.refit_step as i64) as usize + 1
    }

    pub fn refit_dates(&self) -> Vec<YearMonth> {
        (0..self.refit_count())
            .map(|i| self.test_start.add_months(i as i64 * self.refit_step as i64))
            .collect()
    }
}

/// One out-of-sample asset-month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub date: YearMonth,
    pub asset_id: String,
    /// `beta(Z_{t-1}) f_hat_t` with the month's own fitted factors.
    pub fitted: f64,
    /// `beta(Z_{t-1}) lambda_hat`, using the prevailing factor mean.
    pub forecast: f64,
    pub realized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefitRecord {
    pub refit_date: YearMonth,
    pub train_months: usize,
    pub val_months: usize,
    pub test_months: usize,
    pub chosen_lambda: f64,
    pub candidates: Vec<(f64, f64)>,
    pub best_epoch: usize,
    pub curve: Vec<LossPoint>,
    /// Prevailing factor mean used for the forecasts.
    pub factor_premium: Vector,
    pub model: ConditionalAutoencoder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledMetrics {
    pub total_r2_pct: f64,
    pub predictive_r2_pct: f64,
    /// `None` when fewer than two months qualify or the spread is constant.
    pub sharpe_annualized: Option<f64>,
    pub test_months: usize,
    pub test_observations: usize,
}

impl PooledMetrics {
    pub fn from_predictions(predictions: &[PredictionRecord]) -> Result<Self> {
        let total_r2_pct = total_r2(predictions.iter().map(|p| (p.fitted, p.realized)))?;
        let predictive_r2_pct = predictive_r2(predictions.iter().map(|p| (p.forecast, p.realized)))?;
        let sharpe_annualized = match sharpe_long_short(predictions) {
            Ok(s) => Some(s),
            Err(e) => {
                log::warn!("no Sharpe ratio: {e}");
                None
            }
        };
        let test_months = predictions.chunk_by(|a, b| a.date == b.date).count();
        Ok(PooledMetrics {
            total_r2_pct,
            predictive_r2_pct,
            sharpe_annualized,
            test_months,
            test_observations: predictions.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub model_kind: NetKind,
    pub n_factors: usize,
    pub refits: Vec<RefitRecord>,
    /// Computed from test-period predictions only.
    pub pooled: PooledMetrics,
    /// Date-ordered out-of-sample predictions.
    pub predictions: Vec<PredictionRecord>,
}
