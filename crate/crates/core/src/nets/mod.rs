//! Network layers with explicit forward/backward passes and the beta network
//! `beta(z) = Gamma_out (Phi_{L-1} o ... o Phi_0) Gamma_in z`.
//!
//! Every layer maps a batch matrix (one row per asset) to a batch matrix and
//! returns a cache for its backward pass. Backward passes return the input
//! gradient plus one gradient tensor per learnable parameter array, in the
//! same order as [`Parameters::param_slices`].

mod beta;
mod dense;
mod kan;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use beta::{ArchSpec, BetaCache, BetaNetwork, GridSpec, HiddenCache, HiddenLayer};
pub use dense::{Activation, LinearCache, LinearLayer, MlpCache, MlpLayer};
pub use kan::{KanCache, KanLayer};

use crate::{Error, Result};

/// Which function family the beta network uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Kan,
    Mlp,
    Linear,
}

impl NetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NetKind::Kan => "kan",
            NetKind::Mlp => "mlp",
            NetKind::Linear => "linear",
        }
    }
}

impl core::fmt::Display for NetKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for NetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kan" => Ok(NetKind::Kan),
            "mlp" => Ok(NetKind::Mlp),
            "linear" => Ok(NetKind::Linear),
            other => Err(Error::InvalidArgument(alloc::format!(
                "unknown model kind `{other}` (expected kan, mlp or linear)"
            ))),
        }
    }
}

/// Flat views over every learnable parameter array, in a fixed order.
pub trait Parameters {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }
}

/// Gradient tensors congruent with some [`Parameters`] implementor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientSet {
    pub tensors: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like<P: Parameters + ?Sized>(params: &P) -> Self {
        GradientSet {
            tensors: params
                .param_slices()
                .iter()
                .map(|s| alloc::vec![0.0; s.len()])
                .collect(),
        }
    }

    pub fn is_congruent<P: Parameters + ?Sized>(&self, params: &P) -> bool {
        let slices = params.param_slices();
        slices.len() == self.tensors.len()
            && slices.iter().zip(&self.tensors).all(|(p, g)| p.len() == g.len())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &GradientSet, scale: f64) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::shape("GradientSet::add_scaled", self.tensors.len(), other.tensors.len()));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            if a.len() != b.len() {
                return Err(Error::shape("GradientSet::add_scaled", a.len(), b.len()));
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            for x in t {
                *x *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors.iter().flatten().copied()
    }
}
