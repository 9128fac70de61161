//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//! output = "runs/kan3"
//!
//! [data]
//! panel = "data/panel.csv"          # metadata defaults to data/panel.meta.json
//!
//! [model]
//! kind = "kan"
//! factors = 3
//!
//! [train]
//! max_epochs = 200
//! lambda_grid = [0.01, 0.1, 1.0]
//!
//! [split]
//! train_start = "2000-02"
//! val_months = 24
//! test_start = "2012-01"
//! test_end = "2019-12"
//!
//! [synth]
//! n_assets = 200
//! n_characteristics = 20
//! n_months = 240
//! beta_fn = "sine"
//! signal_r2 = 0.3
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.
//! The top-level `seed` drives data generation, initialization and shuffling.

use std::path::{Path, PathBuf};

use kanfactor_core::backtest::{SplitPlan, TrainConfig};
use kanfactor_core::data::{BetaFn, NoiseSpec, SyntheticConfig, YearMonth};
use kanfactor_core::nets::{ArchSpec, GridSpec};
use kanfactor_core::{Matrix, NetKind};
use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    pub split: Option<SplitSection>,
    pub synth: Option<SynthSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub panel: PathBuf,
    pub metadata: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            panel: PathBuf::from("panel.csv"),
            metadata: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: NetKind,
    pub factors: usize,
    /// Width of the `Gamma_in` embedding; defaults per kind.
    pub embed_dim: Option<usize>,
    /// Hidden layer widths; defaults per kind.
    pub hidden: Option<Vec<usize>>,
    pub grid: GridSpec,
    pub spline_noise: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: NetKind::Kan,
            factors: 3,
            embed_dim: None,
            hidden: None,
            grid: GridSpec::default(),
            spline_noise: 0.1,
        }
    }
}

impl ModelSection {
    pub fn arch(&self, n_characteristics: usize) -> Result<ArchSpec> {
        let mut spec = ArchSpec::new(self.kind, n_characteristics, self.factors);
        if let Some(d) = self.embed_dim {
            spec.embed_dim = d;
        }
        if let Some(h) = &self.hidden {
            spec.hidden = h.clone();
        }
        spec.grid = self.grid.clone();
        spec.spline_noise = self.spline_noise;
        spec.validate()?;
        spec.grid.build()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train_start: YearMonth,
    pub val_months: u32,
    pub test_start: YearMonth,
    pub test_end: YearMonth,
    #[serde(default = "default_refit_step")]
    pub refit_step: u32,
}

fn default_refit_step() -> u32 {
    12
}

impl SplitSection {
    pub fn plan(&self) -> SplitPlan {
        SplitPlan {
            train_start: self.train_start,
            val_months: self.val_months,
            test_start: self.test_start,
            test_end: self.test_end,
            refit_step: self.refit_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub n_assets: usize,
    pub n_characteristics: usize,
    /// Planted factor count; defaults to `model.factors`.
    pub n_factors: Option<usize>,
    pub n_months: usize,
    pub beta_fn: BetaFn,
    pub noise_std: Option<f64>,
    pub signal_r2: Option<f64>,
    pub factor_mean: Option<Vec<f64>>,
    /// Row-major `K x K` factor covariance.
    pub factor_cov: Option<Vec<Vec<f64>>>,
    pub start: Option<YearMonth>,
}

impl RunConfig {
    pub fn from_toml(text: &str, source: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Usage(format!("{}: {e}", source.display())))
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.panel);
        if let Some(m) = self.data.metadata.as_mut() {
            fix(m);
        }
        if let Some(o) = self.output.as_mut() {
            fix(o);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.output = Some(out.clone());
        }
        if let Some(k) = o.model {
            self.model.kind = k;
        }
        if let Some(k) = o.factors {
            self.model.factors = k;
        }
    }

    pub fn metadata_path(&self) -> PathBuf {
        self.data
            .metadata
            .clone()
            .unwrap_or_else(|| crate::panel::metadata_path(&self.data.panel))
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.output
            .as_deref()
            .ok_or_else(|| Error::Usage("no output directory: set `output` in the config or pass --out".into()))
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn split_plan(&self) -> Result<SplitPlan> {
        let plan = self
            .split
            .as_ref()
            .ok_or_else(|| Error::Usage("the config has no [split] section".into()))?
            .plan();
        plan.validate()?;
        Ok(plan)
    }

    pub fn synthetic(&self) -> Result<SyntheticConfig> {
        let s = self
            .synth
            .as_ref()
            .ok_or_else(|| Error::Usage("the config has no [synth] section".into()))?;
        let noise = match (s.noise_std, s.signal_r2) {
            (Some(v), None) => NoiseSpec::NoiseStd(v),
            (None, Some(r)) => NoiseSpec::SignalR2(r),
            _ => return Err(Error::Usage("[synth] needs exactly one of noise_std and signal_r2".into())),
        };
        let k = s.n_factors.unwrap_or(self.model.factors);
        let mut cfg = SyntheticConfig::new(s.n_assets, s.n_characteristics, k, s.n_months, s.beta_fn, noise, self.seed);
        if let Some(m) = &s.factor_mean {
            cfg.factor_mean = m.clone();
        }
        if let Some(rows) = &s.factor_cov {
            cfg.factor_cov = Matrix::from_rows(rows).map_err(|e| Error::Usage(format!("[synth] factor_cov: {e}")))?;
        }
        if let Some(start) = s.start {
            cfg.start = start;
        }
        Ok(cfg)
    }
}

/// Command-line flags that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub model: Option<NetKind>,
    pub factors: Option<usize>,
}
