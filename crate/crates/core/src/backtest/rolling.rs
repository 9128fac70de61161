use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::prevailing_mean;
use super::train::{select_lambda, LambdaSelection};
use super::{BacktestReport, PooledMetrics, PredictionRecord, RefitRecord, SplitPlan, TrainConfig};
use crate::data::{PanelDataset, Slice, YearMonth};
use crate::factor_model::ConditionalAutoencoder;
use crate::linalg::Vector;
use crate::nets::ArchSpec;
use crate::{Error, Result};

/// A model fitted on one train/validation split.
#[derive(Debug, Clone, PartialEq)]
pub struct FitWindow {
    pub selection: LambdaSelection,
    pub train_months: usize,
    pub val_months: usize,
    /// Mean fitted factor over every month before the split end.
    pub factor_premium: Vector,
}

/// Trains on `[train_start, end - val_months)`, selects the ridge penalty on
/// `[end - val_months, end)` and computes the prevailing factor mean over
/// `[train_start, end)`. Every candidate starts from the same
/// initialization, drawn from `seed`.
pub fn fit_window(
    panel: &PanelDataset,
    train_start: YearMonth,
    end: YearMonth,
    val_months: u32,
    cfg: &TrainConfig,
    spec: &ArchSpec,
    seed: u64,
) -> Result<FitWindow> {
    let val_start = end.add_months(-(val_months as i64));
    let train = panel.window(train_start, val_start);
    let val = panel.window(val_start, end);
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data(alloc::format!(
            "split ending {end} has {} training and {} validation months",
            train.len(),
            val.len()
        )));
    }
    let run_cfg = TrainConfig {
        seed,
        ..cfg.clone()
    };
    let selection = select_lambda(
        |lambda| ConditionalAutoencoder::init(spec, lambda, &mut ChaCha8Rng::seed_from_u64(seed)),
        train,
        val,
        &run_cfg,
    )?;
    let history = panel.window(train_start, end);
    let factor_premium = factor_premium(&selection.outcome.model, history)?;
    Ok(FitWindow {
        selection,
        train_months: train.len(),
        val_months: val.len(),
        factor_premium,
    })
}

fn factor_premium(model: &ConditionalAutoencoder, history: &[Slice]) -> Result<Vector> {
    let factors = history
        .iter()
        .map(|s| model.factor_net().factors(&model.portfolios(&s.z, &s.r)?))
        .collect::<Result<Vec<_>>>()?;
    prevailing_mean(&factors)
}

/// Recursive refitting: one fit per refit date, each predicting the next
/// `refit_step` test months. Refit `i` uses seed `cfg.seed + i`.
pub fn rolling_backtest(
    panel: &PanelDataset,
    plan: &SplitPlan,
    cfg: &TrainConfig,
    spec: &ArchSpec,
) -> Result<BacktestReport> {
    plan.validate()?;
    cfg.validate()?;
    spec.validate()?;
    let (first, last) = match (panel.first_date(), panel.last_date()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Empty("panel months")),
    };
    if plan.train_start < first || plan.test_end > last {
        return Err(Error::Data(alloc::format!(
            "plan {}..={} exceeds the panel span {first}..={last}",
            plan.train_start, plan.test_end
        )));
    }
    if panel.characteristic_names.len() != spec.n_characteristics {
        return Err(Error::shape(
            "rolling_backtest characteristics",
            spec.n_characteristics,
            panel.characteristic_names.len(),
        ));
    }

    let test_stop = plan.test_end.add_months(1);
    let mut refits = Vec::with_capacity(plan.refit_count());
    let mut predictions = Vec::new();
    for (i, refit_date) in plan.refit_dates().into_iter().enumerate() {
        let fit = fit_window(
            panel,
            plan.train_start,
            refit_date,
            plan.val_months,
            cfg,
            spec,
            cfg.seed.wrapping_add(i as u64),
        )?;
        let model = &fit.selection.outcome.model;
        let next = core::cmp::min(refit_date.add_months(plan.refit_step as i64), test_stop);
        let test = panel.window(refit_date, next);
        for s in test {
            let (pred, _) = model.forward(&s.z, &s.r)?;
            let forecast = pred.beta.matvec(&fit.factor_premium)?;
            for (a, id) in s.asset_ids.iter().enumerate() {
                predictions.push(PredictionRecord {
                    date: s.date,
                    asset_id: id.clone(),
                    fitted: pred.r_hat[a],
                    forecast: forecast[a],
                    realized: s.r[a],
                });
            }
        }
        log::info!(
            "refit {refit_date}: lambda {} (best epoch {}), {} test months",
            fit.selection.lambda,
            fit.selection.outcome.best_epoch,
            test.len()
        );
        refits.push(RefitRecord {
            refit_date,
            train_months: fit.train_months,
            val_months: fit.val_months,
            test_months: test.len(),
            chosen_lambda: fit.selection.lambda,
            candidates: fit.selection.candidates,
            best_epoch: fit.selection.outcome.best_epoch,
            curve: fit.selection.outcome.curve,
            factor_premium: fit.factor_premium,
            model: fit.selection.outcome.model,
        });
    }
    let pooled = PooledMetrics::from_predictions(&predictions)?;
    Ok(BacktestReport {
        model_kind: spec.kind,
        n_factors: spec.n_factors,
        refits,
        pooled,
        predictions,
    })
}
