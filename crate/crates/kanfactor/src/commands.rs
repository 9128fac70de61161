//! The subcommands. Each one reads all of its inputs first, writes its
//! outputs into a [`Staging`] directory and moves them into place only once
//! everything has succeeded.

use std::io::Write;
use std::path::{Path, PathBuf};

use kanfactor_core::backtest::{fit_window, rolling_backtest, BacktestReport};
use kanfactor_core::data::{apply_lags, build_dataset, generate_synthetic, PanelDataset, SyntheticConfig, SyntheticTruth};
use kanfactor_core::nets::ArchSpec;
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    self, save_checkpoint, save_json, write_curve, write_predictions, LambdaCandidate, PredictionKind, RefitSummary,
    ReportFile, Staging,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::panel::{load_panel, metadata_path, save_panel};

pub const PANEL_FILE: &str = "panel.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const REPORT_FILE: &str = "report.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const FORECASTS_FILE: &str = "forecasts.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CURVE_FILE: &str = "loss_curve.csv";
pub const TRAIN_SUMMARY_FILE: &str = "train.json";

/// The planted generator behind a synthetic panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub config: SyntheticConfig,
    pub truth: SyntheticTruth,
}

/// Writes `panel.csv`, `panel.meta.json` and `truth.json` into the output
/// directory.
pub fn synth(cfg: &RunConfig, out: &mut dyn Write) -> Result<PathBuf> {
    let synth_cfg = cfg.synthetic()?;
    let target = cfg.output_dir()?;
    let (panel, truth) = generate_synthetic(&synth_cfg)?;
    let staging = Staging::new(target)?;
    let csv_path = staging.path().join(PANEL_FILE);
    save_panel(&panel, &csv_path, &metadata_path(&csv_path))?;
    save_json(
        &staging.path().join(TRUTH_FILE),
        &TruthFile {
            config: synth_cfg,
            truth: truth.clone(),
        },
    )?;
    let dir = staging.commit()?;
    say(
        out,
        format_args!(
            "wrote {} rows to {} (signal share {:.4}, noise std {:.6})",
            panel.observations().len(),
            dir.join(PANEL_FILE).display(),
            truth.signal_r2,
            truth.noise_std
        ),
    )?;
    Ok(dir)
}

fn load_dataset(cfg: &RunConfig) -> Result<PanelDataset> {
    let raw = load_panel(&cfg.data.panel, &cfg.metadata_path())?;
    let dataset = build_dataset(&apply_lags(&raw));
    if dataset.months.is_empty() {
        return Err(Error::format(&cfg.data.panel, "no month has both returns and lagged characteristics"));
    }
    log::info!(
        "{}: {} usable months, {} characteristics",
        cfg.data.panel.display(),
        dataset.months.len(),
        dataset.characteristic_names.len()
    );
    Ok(dataset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub architecture: ArchSpec,
    pub train: kanfactor_core::backtest::TrainConfig,
    pub train_start: kanfactor_core::data::YearMonth,
    pub split_end: kanfactor_core::data::YearMonth,
    pub train_months: usize,
    pub val_months: usize,
    pub chosen_lambda: f64,
    pub candidates: Vec<LambdaCandidate>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub factor_premium: Vec<f64>,
}

/// Fits one model on the first split of the plan: training months up to
/// `test_start - val_months`, validation months up to `test_start`.
pub fn train(cfg: &RunConfig, out: &mut dyn Write) -> Result<PathBuf> {
    let train_cfg = cfg.train_config()?;
    let plan = cfg.split_plan()?;
    let target = cfg.output_dir()?;
    let dataset = load_dataset(cfg)?;
    let spec = cfg.model.arch(dataset.characteristic_names.len())?;
    let fit = fit_window(
        &dataset,
        plan.train_start,
        plan.test_start,
        plan.val_months,
        &train_cfg,
        &spec,
        train_cfg.seed,
    )?;
    let outcome = &fit.selection.outcome;
    let summary = TrainSummary {
        architecture: spec,
        train: train_cfg,
        train_start: plan.train_start,
        split_end: plan.test_start,
        train_months: fit.train_months,
        val_months: fit.val_months,
        chosen_lambda: fit.selection.lambda,
        candidates: candidates(&fit.selection.candidates),
        best_epoch: outcome.best_epoch,
        best_val_loss: outcome.best_val_loss,
        factor_premium: fit.factor_premium.to_vec(),
    };
    let staging = Staging::new(target)?;
    save_checkpoint(&staging.path().join(CHECKPOINT_FILE), &outcome.model)?;
    write_curve(&staging.path().join(CURVE_FILE), &outcome.curve)?;
    save_json(&staging.path().join(TRAIN_SUMMARY_FILE), &summary)?;
    let dir = staging.commit()?;
    say(
        out,
        format_args!(
            "lambda {} chosen, best epoch {} (validation loss {:.6e}); outputs in {}",
            summary.chosen_lambda,
            summary.best_epoch,
            summary.best_val_loss,
            dir.display()
        ),
    )?;
    Ok(dir)
}

fn candidates(pairs: &[(f64, f64)]) -> Vec<LambdaCandidate> {
    pairs
        .iter()
        .map(|&(lambda, val_loss)| LambdaCandidate { lambda, val_loss })
        .collect()
}

/// Runs the rolling backtest and writes `report.json`, `predictions.csv`
/// (fitted values), `forecasts.csv`, and per-refit loss curves and
/// checkpoints.
pub fn backtest(cfg: &RunConfig, out: &mut dyn Write) -> Result<PathBuf> {
    let train_cfg = cfg.train_config()?;
    let plan = cfg.split_plan()?;
    let target = cfg.output_dir()?;
    let dataset = load_dataset(cfg)?;
    let spec = cfg.model.arch(dataset.characteristic_names.len())?;
    let report = rolling_backtest(&dataset, &plan, &train_cfg, &spec)?;

    let staging = Staging::new(target)?;
    let curves = staging.subdir("curves")?;
    let checkpoints = staging.subdir("checkpoints")?;
    let mut refits = Vec::with_capacity(report.refits.len());
    for r in &report.refits {
        let curve_file = format!("curves/refit_{}.csv", r.refit_date);
        let checkpoint_file = format!("checkpoints/refit_{}.json", r.refit_date);
        write_curve(&curves.join(format!("refit_{}.csv", r.refit_date)), &r.curve)?;
        save_checkpoint(&checkpoints.join(format!("refit_{}.json", r.refit_date)), &r.model)?;
        refits.push(RefitSummary {
            refit_date: r.refit_date,
            train_months: r.train_months,
            val_months: r.val_months,
            test_months: r.test_months,
            chosen_lambda: r.chosen_lambda,
            candidates: candidates(&r.candidates),
            best_epoch: r.best_epoch,
            factor_premium: r.factor_premium.to_vec(),
            curve_file,
            checkpoint_file,
        });
    }
    write_predictions(&staging.path().join(PREDICTIONS_FILE), &report.predictions, PredictionKind::Fitted)?;
    write_predictions(&staging.path().join(FORECASTS_FILE), &report.predictions, PredictionKind::Forecast)?;
    let file = report_file(&report, cfg, spec, train_cfg, plan, refits);
    save_json(&staging.path().join(REPORT_FILE), &file)?;
    let dir = staging.commit()?;
    write_table(out, &[(label(&file), file.pooled)])?;
    say(out, format_args!("outputs in {}", dir.display()))?;
    Ok(dir)
}

fn report_file(
    report: &BacktestReport,
    cfg: &RunConfig,
    architecture: ArchSpec,
    train: kanfactor_core::backtest::TrainConfig,
    plan: kanfactor_core::backtest::SplitPlan,
    refits: Vec<RefitSummary>,
) -> ReportFile {
    ReportFile {
        model_kind: report.model_kind,
        n_factors: report.n_factors,
        n_characteristics: architecture.n_characteristics,
        seed: cfg.seed,
        architecture,
        train,
        plan,
        pooled: report.pooled,
        refits,
        predictions_file: PREDICTIONS_FILE.into(),
        forecasts_file: FORECASTS_FILE.into(),
    }
}

fn label(r: &ReportFile) -> String {
    format!("{} K={}", r.model_kind, r.n_factors)
}

/// Prints the pooled metrics of one or more reports side by side.
pub fn report(paths: &[PathBuf], out: &mut dyn Write) -> Result<()> {
    if paths.is_empty() {
        return Err(Error::Usage("report needs at least one report file".into()));
    }
    let reports = paths
        .iter()
        .map(|p| artifacts::load_json::<ReportFile>(p))
        .collect::<Result<Vec<_>>>()?;
    let columns: Vec<_> = reports.iter().map(|r| (label(r), r.pooled)).collect();
    write_table(out, &columns)
}

pub const METRIC_ROWS: [&str; 3] = ["total R2 (%)", "predictive R2 (%)", "Sharpe (annualized)"];

fn write_table(out: &mut dyn Write, columns: &[(String, kanfactor_core::backtest::PooledMetrics)]) -> Result<()> {
    let width = columns.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(12);
    let mut text = format!("{:<20}", "");
    for (l, _) in columns {
        text.push_str(&format!("  {l:>width$}"));
    }
    text.push('\n');
    for (row, name) in METRIC_ROWS.iter().enumerate() {
        text.push_str(&format!("{name:<20}"));
        for (_, m) in columns {
            let v = match row {
                0 => sig6(m.total_r2_pct),
                1 => sig6(m.predictive_r2_pct),
                _ => m.sharpe_annualized.map_or_else(|| "n/a".to_string(), sig6),
            };
            text.push_str(&format!("  {v:>width$}"));
        }
        text.push('\n');
    }
    out.write_all(text.as_bytes()).map_err(Error::io(Path::new("<stdout>")))
}

/// Six significant figures in plain decimal notation.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).clamp(0, 20) as usize;
    format!("{x:.decimals$}")
}

/// Writes one CSV per KAN edge of a checkpoint into `out_dir`.
pub fn export_splines(checkpoint: &Path, out_dir: &Path, out: &mut dyn Write) -> Result<PathBuf> {
    let model = artifacts::load_checkpoint(checkpoint)?;
    let staging = Staging::new(out_dir)?;
    let files = artifacts::export_splines(&model, staging.path())?;
    let dir = staging.commit()?;
    say(out, format_args!("wrote {} edge curves to {}", files.len(), dir.display()))?;
    Ok(dir)
}

fn say(out: &mut dyn Write, args: std::fmt::Arguments<'_>) -> Result<()> {
    writeln!(out, "{args}").map_err(Error::io(Path::new("<stdout>")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_figures() {
        assert_eq!(sig6(11.0234567), "11.0235");
        assert_eq!(sig6(0.00203456789), "0.00203457");
        assert_eq!(sig6(-1234567.0), "-1234567");
        assert_eq!(sig6(0.0), "0");
    }
}
