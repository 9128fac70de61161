//! The conditional autoencoder `r_hat_t = beta(Z_{t-1}) W0 x_t`, where
//! `x_t = (Z'Z + lambda I)^{-1} Z' r_t` are the returns of the characteristic
//! portfolios.
//!
//! `x_t` is a fixed encoding of each cross-section: gradients flow into the
//! beta network and into `W0`, never through the ridge solve.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{ridge_solve, Matrix, Vector};
use crate::nets::{ArchSpec, BetaCache, BetaNetwork, LinearLayer, Parameters};
use crate::{Error, GradientSet, Result};

/// Characteristic-portfolio returns: the ridge regression of `r` on `z`.
pub fn characteristic_portfolios(z: &Matrix, r: &[f64], lambda: f64) -> Result<Vector> {
    if z.rows() < z.cols() {
        log::warn!(
            "cross-section has {} assets for {} characteristics; portfolio returns are under-determined",
            z.rows(),
            z.cols()
        );
    }
    ridge_solve(z, r, lambda)
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &[f64], actual: &[f64]) -> Result<(f64, Vector)> {
    if pred.len() != actual.len() {
        return Err(Error::shape("mse_loss", pred.len(), actual.len()));
    }
    if pred.is_empty() {
        return Err(Error::Empty("mse_loss inputs"));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (p, a) in pred.iter().zip(actual) {
        let e = p - a;
        loss += e * e;
        grad.push(2.0 * e / n);
    }
    Ok((loss / n, grad.into()))
}

/// Bias-free linear factor network `f = W0 x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorNetwork {
    pub w0: LinearLayer,
}

impl FactorNetwork {
    pub fn factors(&self, x: &[f64]) -> Result<Vector> {
        self.w0.weight.matvec(x)
    }
}

/// One month's model output.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicePrediction {
    pub r_hat: Vector,
    pub f_hat: Vector,
    pub x_t: Vector,
    pub beta: Matrix,
}

#[derive(Debug, Clone)]
pub struct ModelCache {
    generation: u64,
    beta_cache: BetaCache,
    beta: Matrix,
    f_hat: Vector,
    x_t: Vector,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct ConditionalAutoencoder {
    beta_net: BetaNetwork,
    factor_net: FactorNetwork,
    ridge_lambda: f64,
    generation: u64,
}

impl PartialEq for ConditionalAutoencoder {
    fn eq(&self, other: &Self) -> bool {
        self.beta_net == other.beta_net
            && self.factor_net == other.factor_net
            && self.ridge_lambda.to_bits() == other.ridge_lambda.to_bits()
    }
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    beta_net: BetaNetwork,
    factor_net: FactorNetwork,
    ridge_lambda: f64,
}

impl TryFrom<ModelRepr> for ConditionalAutoencoder {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        ConditionalAutoencoder::new(r.beta_net, r.factor_net, r.ridge_lambda)
    }
}

impl From<ConditionalAutoencoder> for ModelRepr {
    fn from(m: ConditionalAutoencoder) -> Self {
        ModelRepr {
            beta_net: m.beta_net,
            factor_net: m.factor_net,
            ridge_lambda: m.ridge_lambda,
        }
    }
}

impl ConditionalAutoencoder {
    pub fn new(beta_net: BetaNetwork, factor_net: FactorNetwork, ridge_lambda: f64) -> Result<Self> {
        let w0 = &factor_net.w0.weight;
        if w0.rows() != beta_net.n_factors() || w0.cols() != beta_net.n_inputs() {
            return Err(Error::shape(
                "ConditionalAutoencoder::new",
                format_args!("W0 of {}x{}", beta_net.n_factors(), beta_net.n_inputs()),
                format_args!("{}x{}", w0.rows(), w0.cols()),
            ));
        }
        if !(ridge_lambda >= 0.0) || !ridge_lambda.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "ridge lambda must be finite and non-negative, got {ridge_lambda}"
            )));
        }
        Ok(ConditionalAutoencoder {
            beta_net,
            factor_net,
            ridge_lambda,
            generation: 0,
        })
    }

    /// Random model: beta network per `spec`, Glorot-uniform `W0`.
    pub fn init<R: Rng + ?Sized>(spec: &ArchSpec, ridge_lambda: f64, rng: &mut R) -> Result<Self> {
        let beta_net = BetaNetwork::init(spec, rng)?;
        let w0 = LinearLayer::init(rng, spec.n_characteristics, spec.n_factors);
        ConditionalAutoencoder::new(beta_net, FactorNetwork { w0 }, ridge_lambda)
    }

    pub fn beta_net(&self) -> &BetaNetwork {
        &self.beta_net
    }

    pub fn factor_net(&self) -> &FactorNetwork {
        &self.factor_net
    }

    pub fn ridge_lambda(&self) -> f64 {
        self.ridge_lambda
    }

    pub fn n_factors(&self) -> usize {
        self.beta_net.n_factors()
    }

    pub fn n_characteristics(&self) -> usize {
        self.beta_net.n_inputs()
    }

    /// Mutable access to the networks; invalidates outstanding caches.
    pub fn networks_mut(&mut self) -> (&mut BetaNetwork, &mut FactorNetwork) {
        self.generation += 1;
        (&mut self.beta_net, &mut self.factor_net)
    }

    pub fn portfolios(&self, z: &Matrix, r: &[f64]) -> Result<Vector> {
        characteristic_portfolios(z, r, self.ridge_lambda)
    }

    pub fn forward(&self, z: &Matrix, r: &[f64]) -> Result<(SlicePrediction, ModelCache)> {
        let x_t = self.portfolios(z, r)?;
        self.forward_with_portfolios(z, x_t)
    }

    /// Forward pass with precomputed portfolio returns `x_t` (which depend
    /// only on the data and `ridge_lambda`, not on trainable parameters).
    pub fn forward_with_portfolios(&self, z: &Matrix, x_t: Vector) -> Result<(SlicePrediction, ModelCache)> {
        if x_t.len() != self.n_characteristics() {
            return Err(Error::shape("model_forward", self.n_characteristics(), x_t.len()));
        }
        let f_hat = self.factor_net.factors(&x_t)?;
        let (beta, beta_cache) = self.beta_net.forward(z)?;
        let r_hat = beta.matvec(&f_hat)?;
        let cache = ModelCache {
            generation: self.generation,
            beta_cache,
            beta: beta.clone(),
            f_hat: f_hat.clone(),
            x_t: x_t.clone(),
        };
        Ok((
            SlicePrediction {
                r_hat,
                f_hat,
                x_t,
                beta,
            },
            cache,
        ))
    }

    /// Gradients of every parameter (beta network first, then `W0`) given
    /// the loss gradient with respect to `r_hat`.
    pub fn backward(&self, cache: &ModelCache, dpred: &[f64]) -> Result<GradientSet> {
        if cache.generation != self.generation {
            return Err(Error::StaleCache);
        }
        let (n, k) = cache.beta.shape();
        if dpred.len() != n {
            return Err(Error::shape("model_backward", n, dpred.len()));
        }
        let dbeta = Matrix::from_fn(n, k, |i, j| dpred[i] * cache.f_hat[j]);
        let df = cache.beta.tr_matvec(dpred)?;
        let p = cache.x_t.len();
        let dw0 = Matrix::from_fn(k, p, |j, q| df[j] * cache.x_t[q]);
        let (_, mut grads) = self.beta_net.backward(&cache.beta_cache, &dbeta)?;
        grads.tensors.push(dw0.into_vec());
        Ok(grads)
    }
}

impl Parameters for ConditionalAutoencoder {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = self.beta_net.param_slices();
        out.push(self.factor_net.w0.weight.as_slice());
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        let mut out = self.beta_net.param_slices_mut();
        out.push(self.factor_net.w0.weight.as_mut_slice());
        out
    }
}
