use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{adam_step, OptimizerState};
use super::TrainConfig;
use crate::data::Slice;
use crate::factor_model::{mse_loss, ConditionalAutoencoder};
use crate::linalg::Vector;
use crate::nets::GradientSet;
use crate::{Error, Result};

/// Mean training and validation loss after one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: ConditionalAutoencoder,
    pub curve: Vec<LossPoint>,
    /// Epoch whose parameters were kept; 0 means the initial parameters.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// A month prepared for repeated forward passes: `x_t` depends only on the
/// data and the ridge penalty, so it is solved once.
struct Prepared<'a> {
    slice: &'a Slice,
    x_t: Vector,
}

fn prepare<'a>(model: &ConditionalAutoencoder, slices: &'a [Slice]) -> Result<Vec<Prepared<'a>>> {
    slices
        .iter()
        .map(|slice| {
            Ok(Prepared {
                slice,
                x_t: model.portfolios(&slice.z, &slice.r)?,
            })
        })
        .collect()
}

/// Equal-weighted mean over months of the per-month MSE.
fn mean_loss(model: &ConditionalAutoencoder, months: &[Prepared<'_>]) -> Result<f64> {
    let mut total = 0.0;
    for m in months {
        let (pred, _) = model.forward_with_portfolios(&m.slice.z, m.x_t.clone())?;
        total += mse_loss(&pred.r_hat, &m.slice.r)?.0;
    }
    Ok(total / months.len() as f64)
}

/// Mean per-month MSE of `model` over `slices`.
pub fn evaluate_loss(model: &ConditionalAutoencoder, slices: &[Slice]) -> Result<f64> {
    if slices.is_empty() {
        return Err(Error::Empty("evaluation months"));
    }
    mean_loss(model, &prepare(model, slices)?)
}

/// Loss and gradient averaged over a minibatch of months.
fn batch_gradient(
    model: &ConditionalAutoencoder,
    batch: &[&Prepared<'_>],
) -> Result<(f64, GradientSet)> {
    let mut grads = GradientSet::zeros_like(model);
    let mut loss = 0.0;
    let w = 1.0 / batch.len() as f64;
    for m in batch {
        let (pred, cache) = model.forward_with_portfolios(&m.slice.z, m.x_t.clone())?;
        let (l, dpred) = mse_loss(&pred.r_hat, &m.slice.r)?;
        loss += l;
        grads.add_scaled(&model.backward(&cache, &dpred)?, w)?;
    }
    Ok((loss * w, grads))
}

/// Minibatch Adam over shuffled training months with early stopping on the
/// validation loss. Returns the best-validation parameters.
pub fn train_model(
    model: ConditionalAutoencoder,
    train: &[Slice],
    val: &[Slice],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training months"));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation months"));
    }
    let train_m = prepare(&model, train)?;
    let val_m = prepare(&model, val)?;
    let mut model = model;
    let mut best_val_loss = mean_loss(&model, &val_m)?;
    if !best_val_loss.is_finite() {
        return Err(Error::Diverged { epoch: 0, what: "validation loss" });
    }
    let mut best_model = model.clone();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut curve = Vec::new();
    let mut state = OptimizerState::new(&model);
    let adam = cfg.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_m.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_months) {
            let batch: Vec<&Prepared<'_>> = chunk.iter().map(|&i| &train_m[i]).collect();
            let (loss, grads) = batch_gradient(&model, &batch)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged { epoch, what: "training loss" });
            }
            epoch_loss += loss * chunk.len() as f64;
            adam_step(&mut model, &grads, &mut state, &adam)?;
        }
        let train_loss = epoch_loss / train_m.len() as f64;
        let val_loss = mean_loss(&model, &val_m)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, what: "validation loss" });
        }
        curve.push(LossPoint {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            best_model = model.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best_model,
        curve,
        best_epoch,
        best_val_loss,
    })
}

/// Outcome of the ridge-penalty search on one train/validation split.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub outcome: TrainOutcome,
    /// `(lambda, best validation loss)` per candidate, in grid order.
    pub candidates: Vec<(f64, f64)>,
}

/// Trains one model per `cfg.lambda_grid` entry and keeps the one with the
/// lowest validation loss; ties go to the smaller penalty.
pub fn select_lambda(
    mut model_factory: impl FnMut(f64) -> Result<ConditionalAutoencoder>,
    train: &[Slice],
    val: &[Slice],
    cfg: &TrainConfig,
) -> Result<LambdaSelection> {
    cfg.validate()?;
    let mut best: Option<(f64, TrainOutcome)> = None;
    let mut candidates = Vec::with_capacity(cfg.lambda_grid.len());
    for &lambda in &cfg.lambda_grid {
        let outcome = train_model(model_factory(lambda)?, train, val, cfg)?;
        let loss = outcome.best_val_loss;
        candidates.push((lambda, loss));
        let better = match &best {
            None => true,
            Some((bl, bo)) => loss < bo.best_val_loss || (loss == bo.best_val_loss && lambda < *bl),
        };
        if better {
            best = Some((lambda, outcome));
        }
    }
    let (lambda, outcome) = best.ok_or(Error::Empty("lambda grid"))?;
    Ok(LambdaSelection {
        lambda,
        outcome,
        candidates,
    })
}
