//! On-disk formats for run outputs: JSON documents (checkpoints, reports,
//! truth files), prediction and loss-curve CSVs, spline exports, and the
//! staging directory that makes a command's outputs appear all at once.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use kanfactor_core::backtest::{LossPoint, PooledMetrics, PredictionRecord, SplitPlan, TrainConfig};
use kanfactor_core::data::YearMonth;
use kanfactor_core::nets::{ArchSpec, HiddenLayer};
use kanfactor_core::spline::spline_eval;
use kanfactor_core::{ConditionalAutoencoder, NetKind, SplineFunction};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pretty-printed JSON with a trailing newline.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(Error::io(path))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn save_checkpoint(path: &Path, model: &ConditionalAutoencoder) -> Result<()> {
    save_json(path, model)
}

pub fn load_checkpoint(path: &Path) -> Result<ConditionalAutoencoder> {
    load_json(path)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(Error::io(path))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(Error::io(path))
}

/// Which prediction a CSV row carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionKind {
    /// `beta f_hat_t` with the month's fitted factors.
    Fitted,
    /// `beta lambda_hat` with the prevailing factor mean.
    Forecast,
}

pub const PREDICTIONS_HEADER: &str = "date,asset_id,predicted,realized";

pub fn write_predictions(path: &Path, records: &[PredictionRecord], kind: PredictionKind) -> Result<()> {
    let mut w = create(path)?;
    let io = Error::io(path);
    let mut body = String::with_capacity(records.len() * 48);
    body.push_str(PREDICTIONS_HEADER);
    body.push('\n');
    for r in records {
        let predicted = match kind {
            PredictionKind::Fitted => r.fitted,
            PredictionKind::Forecast => r.forecast,
        };
        body.push_str(&format!("{},{},{},{}\n", r.date, r.asset_id, predicted, r.realized));
    }
    w.write_all(body.as_bytes()).map_err(io)?;
    finish(path, w)
}

/// One row of a predictions CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PredictionRow {
    pub date: YearMonth,
    pub asset_id: String,
    pub predicted: f64,
    pub realized: f64,
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    let header = rdr.headers().map_err(|e| Error::format(path, e))?;
    if header.iter().ne(PREDICTIONS_HEADER.split(',')) {
        return Err(Error::format(path, format!("expected header `{PREDICTIONS_HEADER}`")));
    }
    rdr.deserialize()
        .collect::<Result<Vec<PredictionRow>, _>>()
        .map_err(|e| Error::format(path, e))
}

pub const CURVE_HEADER: &str = "epoch,train_loss,val_loss";

pub fn write_curve(path: &Path, curve: &[LossPoint]) -> Result<()> {
    let mut w = create(path)?;
    let mut body = format!("{CURVE_HEADER}\n");
    for p in curve {
        body.push_str(&format!("{},{},{}\n", p.epoch, p.train_loss, p.val_loss));
    }
    w.write_all(body.as_bytes()).map_err(Error::io(path))?;
    finish(path, w)
}

pub fn read_curve(path: &Path) -> Result<Vec<LossPoint>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    rdr.deserialize()
        .collect::<Result<Vec<LossPoint>, _>>()
        .map_err(|e| Error::format(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCandidate {
    pub lambda: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitSummary {
    pub refit_date: YearMonth,
    pub train_months: usize,
    pub val_months: usize,
    pub test_months: usize,
    pub chosen_lambda: f64,
    pub candidates: Vec<LambdaCandidate>,
    pub best_epoch: usize,
    pub factor_premium: Vec<f64>,
    /// Paths relative to the report's directory.
    pub curve_file: String,
    pub checkpoint_file: String,
}

/// The `report.json` document written by a backtest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub model_kind: NetKind,
    pub n_factors: usize,
    pub n_characteristics: usize,
    pub seed: u64,
    pub architecture: ArchSpec,
    pub train: TrainConfig,
    pub plan: SplitPlan,
    pub pooled: PooledMetrics,
    pub refits: Vec<RefitSummary>,
    /// Fitted values `beta f_hat`, scored by total R^2.
    pub predictions_file: String,
    /// Forecasts `beta lambda_hat`, scored by predictive R^2 and the Sharpe ratio.
    pub forecasts_file: String,
}

pub const SPLINE_SAMPLES: usize = 201;

/// `SPLINE_SAMPLES` evenly spaced points over `[lo - 0.5, hi + 0.5]`.
pub fn spline_curve(edge: &SplineFunction) -> Vec<(f64, f64)> {
    let lo = edge.grid.lo() - 0.5;
    let hi = edge.grid.hi() + 0.5;
    let step = (hi - lo) / (SPLINE_SAMPLES - 1) as f64;
    (0..SPLINE_SAMPLES)
        .map(|s| {
            let x = if s + 1 == SPLINE_SAMPLES { hi } else { lo + step * s as f64 };
            (x, spline_eval(edge, x))
        })
        .collect()
}

/// Writes `layer{l}_out{i}_in{j}.csv` (header `x,phi_x`) for every edge of
/// every KAN layer, `l` counting hidden layers from 0. Returns the paths.
pub fn export_splines(model: &ConditionalAutoencoder, dir: &Path) -> Result<Vec<PathBuf>> {
    let net = model.beta_net();
    if net.kind() != NetKind::Kan {
        return Err(Error::Usage(format!(
            "checkpoint holds a {} model; spline export needs a kan model",
            net.kind()
        )));
    }
    let mut written = Vec::new();
    for (l, layer) in net.hidden().iter().enumerate() {
        let HiddenLayer::Kan(layer) = layer else { continue };
        for i in 0..layer.n_out() {
            for j in 0..layer.n_in() {
                let path = dir.join(format!("layer{l}_out{i}_in{j}.csv"));
                let mut body = String::from("x,phi_x\n");
                for (x, y) in spline_curve(&layer.edge(i, j)) {
                    body.push_str(&format!("{x},{y}\n"));
                }
                fs::write(&path, body).map_err(Error::io(&path))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// A temporary directory next to the destination. Outputs are written into
/// it and moved into the destination only by [`Staging::commit`]; dropping it
/// uncommitted removes everything.
pub struct Staging {
    dir: tempfile::TempDir,
    target: PathBuf,
}

impl Staging {
    pub fn new(target: &Path) -> Result<Self> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(Error::io(&parent))?;
        let dir = tempfile::Builder::new()
            .prefix(".kanfactor-staging-")
            .tempdir_in(&parent)
            .map_err(Error::io(&parent))?;
        Ok(Staging {
            dir,
            target: target.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    /// Creates a subdirectory of the staging area and returns its path.
    pub fn subdir(&self, name: &str) -> Result<PathBuf> {
        let p = self.dir.path().join(name);
        fs::create_dir_all(&p).map_err(Error::io(&p))?;
        Ok(p)
    }

    /// Moves every staged entry into the target directory, replacing entries
    /// of the same name.
    pub fn commit(self) -> Result<PathBuf> {
        fs::create_dir_all(&self.target).map_err(Error::io(&self.target))?;
        let mut entries: Vec<PathBuf> = fs::read_dir(self.dir.path())
            .map_err(Error::io(self.dir.path()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(Error::io(self.dir.path()))?;
        entries.sort();
        for src in entries {
            let dest = self.target.join(src.file_name().expect("staged entries have names"));
            if dest.is_dir() {
                fs::remove_dir_all(&dest).map_err(Error::io(&dest))?;
            }
            fs::rename(&src, &dest).map_err(Error::io(&dest))?;
        }
        Ok(self.target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kanfactor_core::SplineGrid;

    #[test]
    fn curve_spans_padded_grid() {
        let edge = SplineFunction::zero(SplineGrid::new(-1.0, 1.0, 5, 3).unwrap());
        let c = spline_curve(&edge);
        assert_eq!(c.len(), 201);
        assert_eq!(c[0].0, -1.5);
        assert_eq!(c[200].0, 1.5);
        assert!((c[100].0).abs() < 1e-15);
    }

    #[test]
    fn staging_is_all_or_nothing() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("out");
        {
            let s = Staging::new(&target).unwrap();
            fs::write(s.path().join("a.txt"), "x").unwrap();
        }
        assert!(!target.exists());
        let s = Staging::new(&target).unwrap();
        fs::write(s.path().join("a.txt"), "x").unwrap();
        let sub = s.subdir("curves").unwrap();
        fs::write(sub.join("c.csv"), "y").unwrap();
        s.commit().unwrap();
        assert_eq!(fs::read_to_string(target.join("a.txt")).unwrap(), "x");
        assert!(target.join("curves/c.csv").exists());
        let leftovers = fs::read_dir(root.path()).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}
