//! Synthetic panels with a planted factor structure
//! `r_t = beta_true(Z_{t-1}) f_t + eps_t`.
//!
//! Raw characteristics are i.i.d. uniform on `[-1, 1]`. The planted exposures
//! are computed from the *normalized* lagged cross-section, i.e. exactly the
//! `Z_{t-1}` that [`super::build_dataset`] hands to a model, so a correctly
//! specified model can recover the structure without normalization error.
//! The first month has no lagged characteristics and its returns are left
//! missing.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{normalize_slice, CharacteristicSpec, Frequency, Observation, RawPanel, YearMonth};
use crate::linalg::{Matrix, Vector};
use crate::math;
use crate::{Error, Result};

/// Planted exposure map from normalized characteristics to `K` betas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaFn {
    /// `beta = Z Gamma_true` with `Gamma_true` uniform on `[-1, 1]`.
    Linear,
    /// `beta_k = sin(pi z_k)`.
    Sine,
    /// `beta_k = z_k^2 - 1/3`.
    Quadratic,
}

impl core::str::FromStr for BetaFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(BetaFn::Linear),
            "sine" => Ok(BetaFn::Sine),
            "quadratic" => Ok(BetaFn::Quadratic),
            other => Err(Error::InvalidArgument(alloc::format!(
                "unknown beta function `{other}` (expected linear, sine or quadratic)"
            ))),
        }
    }
}

/// Idiosyncratic noise level, either directly or through the share of return
/// variance explained by the planted signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    NoiseStd(f64),
    SignalR2(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_assets: usize,
    pub n_characteristics: usize,
    pub n_factors: usize,
    pub n_months: usize,
    pub beta_fn: BetaFn,
    pub factor_mean: Vec<f64>,
    pub factor_cov: Matrix,
    pub noise: NoiseSpec,
    pub start: YearMonth,
    pub seed: u64,
}

impl SyntheticConfig {
    /// Factors with mean 1% and volatility 5% per month, independent.
    pub fn new(
        n_assets: usize,
        n_characteristics: usize,
        n_factors: usize,
        n_months: usize,
        beta_fn: BetaFn,
        noise: NoiseSpec,
        seed: u64,
    ) -> Self {
        SyntheticConfig {
            n_assets,
            n_characteristics,
            n_factors,
            n_months,
            beta_fn,
            factor_mean: alloc::vec![0.01; n_factors],
            factor_cov: Matrix::identity(n_factors).scaled(0.05 * 0.05),
            noise,
            start: YearMonth::new(2000, 1).expect("valid month"),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_assets == 0 || self.n_characteristics == 0 || self.n_factors == 0 || self.n_months == 0 {
            return invalid("assets, characteristics, factors and months must all be at least 1".into());
        }
        if self.beta_fn != BetaFn::Linear && self.n_factors > self.n_characteristics {
            return invalid(alloc::format!(
                "{:?} betas use one characteristic per factor; need K <= P",
                self.beta_fn
            ));
        }
        if self.factor_mean.len() != self.n_factors {
            return invalid(alloc::format!("factor_mean needs {} entries", self.n_factors));
        }
        if self.factor_cov.shape() != (self.n_factors, self.n_factors) {
            return invalid(alloc::format!("factor_cov must be {0}x{0}", self.n_factors));
        }
        if self.factor_mean.iter().chain(self.factor_cov.as_slice()).any(|v| !v.is_finite()) {
            return invalid("factor moments must be finite".into());
        }
        match self.noise {
            NoiseSpec::NoiseStd(s) if !(s >= 0.0 && s.is_finite()) => {
                invalid(alloc::format!("noise_std must be finite and non-negative, got {s}"))
            }
            NoiseSpec::SignalR2(r) if !(r > 0.0 && r <= 1.0) => {
                invalid(alloc::format!("signal_r2 must lie in (0, 1], got {r}"))
            }
            _ => Ok(()),
        }
    }
}

/// Everything needed to reproduce or score against the planted structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub beta_fn: BetaFn,
    pub gamma_true: Option<Matrix>,
    pub factor_mean: Vector,
    pub factor_cov: Matrix,
    pub noise_std: f64,
    /// Share of pooled return variance explained by `beta f`.
    pub signal_r2: f64,
    /// Pooled variance of the planted signal `beta f`.
    pub signal_var: f64,
}

impl SyntheticTruth {
    /// Planted exposures for an `N x P` normalized characteristic matrix.
    pub fn beta(&self, z: &Matrix) -> Matrix {
        let k = self.factor_mean.len();
        match self.beta_fn {
            BetaFn::Linear => {
                let g = self.gamma_true.as_ref().expect("linear truth carries gamma");
                crate::linalg::matmul(z, g).expect("gamma rows match characteristics")
            }
            BetaFn::Sine => Matrix::from_fn(z.rows(), k, |i, j| math::sin(PI * z.get(i, j))),
            BetaFn::Quadratic => Matrix::from_fn(z.rows(), k, |i, j| z.get(i, j) * z.get(i, j) - 1.0 / 3.0),
        }
    }
}

/// Lower factor of a symmetric positive semidefinite matrix; columns with a
/// vanishing pivot are zeroed.
fn psd_factor(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            if (a.get(i, j) - a.get(j, i)).abs() > 1e-12 * scale.max(1.0) {
                return Err(Error::InvalidArgument("factor_cov must be symmetric".into()));
            }
        }
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d < -tol {
            return Err(Error::InvalidArgument("factor_cov must be positive semidefinite".into()));
        }
        if d <= tol {
            continue;
        }
        let d = math::sqrt(d);
        l.set(j, j, d);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Ok(l)
}

/// Normalized values of a fully observed cross-section of `n` distinct values.
fn rank_grid(n: usize) -> Vec<f64> {
    if n < 2 {
        return alloc::vec![0.0; n];
    }
    (0..n).map(|r| -1.0 + 2.0 * r as f64 / (n - 1) as f64).collect()
}

/// Pooled variance of `beta f` under the rank-grid distribution of `Z`.
fn signal_variance(cfg: &SyntheticConfig, gamma: Option<&Matrix>) -> f64 {
    let k = cfg.n_factors;
    let grid = rank_grid(cfg.n_assets);
    let n = grid.len() as f64;
    // second moments of the exposures, E[beta beta'] and E[beta]
    let mut second = Matrix::zeros(k, k);
    let mut first = alloc::vec![0.0; k];
    match cfg.beta_fn {
        BetaFn::Linear => {
            let g = gamma.expect("linear truth carries gamma");
            let v = grid.iter().map(|u| u * u).sum::<f64>() / n;
            let gram = g.gram();
            second = gram.scaled(v);
        }
        BetaFn::Sine | BetaFn::Quadratic => {
            let f = |u: f64| match cfg.beta_fn {
                BetaFn::Sine => math::sin(PI * u),
                _ => u * u - 1.0 / 3.0,
            };
            let mean = grid.iter().map(|&u| f(u)).sum::<f64>() / n;
            let sq = grid.iter().map(|&u| f(u) * f(u)).sum::<f64>() / n;
            for j in 0..k {
                first[j] = mean;
                for l in 0..k {
                    second.set(j, l, if j == l { sq } else { mean * mean });
                }
            }
        }
    }
    let mu = &cfg.factor_mean;
    let mut e_s2 = 0.0;
    for j in 0..k {
        for l in 0..k {
            e_s2 += second.get(j, l) * (cfg.factor_cov.get(l, j) + mu[l] * mu[j]);
        }
    }
    let e_s: f64 = first.iter().zip(mu).map(|(a, b)| a * b).sum();
    (e_s2 - e_s * e_s).max(0.0)
}

/// Draws a panel with planted factor structure. Deterministic in `cfg.seed`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(RawPanel, SyntheticTruth)> {
    cfg.validate()?;
    let (n, p, k) = (cfg.n_assets, cfg.n_characteristics, cfg.n_factors);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let chol = psd_factor(&cfg.factor_cov)?;
    let gamma_true = match cfg.beta_fn {
        BetaFn::Linear => Some(Matrix::from_fn(p, k, |_, _| rng.random_range(-1.0..=1.0))),
        _ => None,
    };
    let signal_var = signal_variance(cfg, gamma_true.as_ref());
    let (noise_std, signal_r2) = match cfg.noise {
        NoiseSpec::NoiseStd(s) => {
            let total = signal_var + s * s;
            (s, if total > 0.0 { signal_var / total } else { 0.0 })
        }
        NoiseSpec::SignalR2(rho) => (math::sqrt(signal_var * (1.0 - rho) / rho), rho),
    };
    let truth = SyntheticTruth {
        beta_fn: cfg.beta_fn,
        gamma_true,
        factor_mean: cfg.factor_mean.clone().into(),
        factor_cov: cfg.factor_cov.clone(),
        noise_std,
        signal_r2,
        signal_var,
    };

    let width = decimal_digits(n.saturating_sub(1)).max(4);
    let ids: Vec<String> = (0..n).map(|i| alloc::format!("A{i:0width$}")).collect();
    let characteristics = (0..p)
        .map(|c| CharacteristicSpec {
            name: alloc::format!("c{:02}", c + 1),
            frequency: Frequency::Monthly,
        })
        .collect();

    let mut observations = Vec::with_capacity(n * cfg.n_months);
    let mut prev: Option<Matrix> = None;
    let mut column = Vec::with_capacity(n);
    for t in 0..cfg.n_months {
        let date = cfg.start.add_months(t as i64);
        let chars = Matrix::from_fn(n, p, |_, _| rng.random_range(-1.0..=1.0));
        let returns: Vec<Option<f64>> = match &prev {
            None => alloc::vec![None; n],
            Some(raw) => {
                let mut z = Matrix::zeros(n, p);
                for c in 0..p {
                    column.clear();
                    column.extend((0..n).map(|i| Some(raw.get(i, c))));
                    for (i, v) in normalize_slice(&column).iter().enumerate() {
                        z.set(i, c, *v);
                    }
                }
                let beta = truth.beta(&z);
                let xi: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
                let f: Vec<f64> = (0..k)
                    .map(|j| cfg.factor_mean[j] + (0..=j).map(|l| chol.get(j, l) * xi[l]).sum::<f64>())
                    .collect();
                (0..n)
                    .map(|i| {
                        let signal: f64 = beta.row(i).iter().zip(&f).map(|(b, f)| b * f).sum();
                        let eps: f64 = rng.sample(StandardNormal);
                        Some(signal + noise_std * eps)
                    })
                    .collect()
            }
        };
        for (i, id) in ids.iter().enumerate() {
            observations.push(Observation {
                date,
                asset_id: id.clone(),
                ret_excess: returns[i],
                characteristics: chars.row(i).iter().map(|&v| Some(v)).collect(),
            });
        }
        prev = Some(chars);
    }
    Ok((RawPanel::new(characteristics, observations)?, truth))
}

fn decimal_digits(mut n: usize) -> usize {
    let mut w = 1;
    while n >= 10 {
        n /= 10;
        w += 1;
    }
    w
}
