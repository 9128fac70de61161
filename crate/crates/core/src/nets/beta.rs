use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{Activation, LinearCache, LinearLayer, MlpCache, MlpLayer};
use super::kan::{KanCache, KanLayer};
use super::{NetKind, Parameters};
use crate::linalg::Matrix;
use crate::spline::SplineGrid;
use crate::{Error, GradientSet, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum HiddenLayer {
    Kan(KanLayer),
    Mlp(MlpLayer),
}

impl HiddenLayer {
    pub fn n_in(&self) -> usize {
        match self {
            HiddenLayer::Kan(l) => l.n_in(),
            HiddenLayer::Mlp(l) => l.n_in(),
        }
    }

    pub fn n_out(&self) -> usize {
        match self {
            HiddenLayer::Kan(l) => l.n_out(),
            HiddenLayer::Mlp(l) => l.n_out(),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, HiddenCache)> {
        Ok(match self {
            HiddenLayer::Kan(l) => {
                let (y, c) = l.forward(x)?;
                (y, HiddenCache::Kan(c))
            }
            HiddenLayer::Mlp(l) => {
                let (y, c) = l.forward(x)?;
                (y, HiddenCache::Mlp(c))
            }
        })
    }

    pub fn backward(&self, cache: &HiddenCache, upstream: &Matrix) -> Result<(Matrix, Vec<Vec<f64>>)> {
        match (self, cache) {
            (HiddenLayer::Kan(l), HiddenCache::Kan(c)) => l.backward(c, upstream),
            (HiddenLayer::Mlp(l), HiddenCache::Mlp(c)) => l.backward(c, upstream),
            _ => Err(Error::StaleCache),
        }
    }

    fn params(&self) -> Vec<&[f64]> {
        match self {
            HiddenLayer::Kan(l) => l.params(),
            HiddenLayer::Mlp(l) => l.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            HiddenLayer::Kan(l) => l.params_mut(),
            HiddenLayer::Mlp(l) => l.params_mut(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum HiddenCache {
    Kan(KanCache),
    Mlp(MlpCache),
}

#[derive(Debug, Clone)]
pub struct BetaCache {
    gamma_in: LinearCache,
    hidden: Vec<HiddenCache>,
    gamma_out: LinearCache,
}

/// Maps an `N x P` characteristic matrix to `N x K` factor exposures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BetaRepr", into = "BetaRepr")]
pub struct BetaNetwork {
    kind: NetKind,
    gamma_in: LinearLayer,
    hidden: Vec<HiddenLayer>,
    gamma_out: LinearLayer,
}

#[derive(Serialize, Deserialize)]
struct BetaRepr {
    kind: NetKind,
    gamma_in: LinearLayer,
    hidden: Vec<HiddenLayer>,
    gamma_out: LinearLayer,
}

impl TryFrom<BetaRepr> for BetaNetwork {
    type Error = Error;

    fn try_from(r: BetaRepr) -> Result<Self> {
        BetaNetwork::new(r.kind, r.gamma_in, r.hidden, r.gamma_out)
    }
}

impl From<BetaNetwork> for BetaRepr {
    fn from(n: BetaNetwork) -> Self {
        BetaRepr {
            kind: n.kind,
            gamma_in: n.gamma_in,
            hidden: n.hidden,
            gamma_out: n.gamma_out,
        }
    }
}

impl BetaNetwork {
    pub fn new(
        kind: NetKind,
        gamma_in: LinearLayer,
        hidden: Vec<HiddenLayer>,
        gamma_out: LinearLayer,
    ) -> Result<Self> {
        let kinds_ok = match kind {
            NetKind::Linear => hidden.is_empty(),
            NetKind::Kan => !hidden.is_empty() && hidden.iter().all(|h| matches!(h, HiddenLayer::Kan(_))),
            NetKind::Mlp => !hidden.is_empty() && hidden.iter().all(|h| matches!(h, HiddenLayer::Mlp(_))),
        };
        if !kinds_ok {
            return Err(Error::InvalidArgument(alloc::format!(
                "hidden layers do not match network kind `{kind}`"
            )));
        }
        let mut width = gamma_in.n_out();
        for (l, h) in hidden.iter().enumerate() {
            if h.n_in() != width {
                return Err(Error::shape(
                    "BetaNetwork layer chain",
                    format_args!("layer {l} input {width}"),
                    h.n_in(),
                ));
            }
            if let HiddenLayer::Kan(k) = h {
                k.validate()?;
            }
            if let HiddenLayer::Mlp(m) = h {
                if m.bias.len() != m.n_out() {
                    return Err(Error::shape("MLP bias", m.n_out(), m.bias.len()));
                }
            }
            width = h.n_out();
        }
        if gamma_out.n_in() != width {
            return Err(Error::shape("BetaNetwork output map", width, gamma_out.n_in()));
        }
        Ok(BetaNetwork {
            kind,
            gamma_in,
            hidden,
            gamma_out,
        })
    }

    /// Random network following `spec`.
    pub fn init<R: Rng + ?Sized>(spec: &ArchSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let gamma_in = LinearLayer::init(rng, spec.n_characteristics, spec.embed_dim);
        let mut hidden = Vec::new();
        let mut width = spec.embed_dim;
        match spec.kind {
            NetKind::Linear => {}
            NetKind::Kan => {
                let grid = spec.grid.build()?;
                for &w in &spec.hidden {
                    hidden.push(HiddenLayer::Kan(KanLayer::init(rng, width, w, grid.clone(), spec.spline_noise)?));
                    width = w;
                }
            }
            NetKind::Mlp => {
                for &w in &spec.hidden {
                    hidden.push(HiddenLayer::Mlp(MlpLayer::init(rng, width, w, Activation::Relu)));
                    width = w;
                }
            }
        }
        let gamma_out = LinearLayer::init(rng, width, spec.n_factors);
        BetaNetwork::new(spec.kind, gamma_in, hidden, gamma_out)
    }

    pub fn kind(&self) -> NetKind {
        self.kind
    }

    /// Number of characteristics `P`.
    pub fn n_inputs(&self) -> usize {
        self.gamma_in.n_in()
    }

    /// Number of factors `K`.
    pub fn n_factors(&self) -> usize {
        self.gamma_out.n_out()
    }

    pub fn gamma_in(&self) -> &LinearLayer {
        &self.gamma_in
    }

    pub fn gamma_out(&self) -> &LinearLayer {
        &self.gamma_out
    }

    pub fn gamma_out_mut(&mut self) -> &mut LinearLayer {
        &mut self.gamma_out
    }

    pub fn hidden(&self) -> &[HiddenLayer] {
        &self.hidden
    }

    /// Row `i` of the result is the exposure vector of asset `i`.
    pub fn forward(&self, z: &Matrix) -> Result<(Matrix, BetaCache)> {
        if z.cols() != self.n_inputs() {
            return Err(Error::shape("beta_forward", self.n_inputs(), z.cols()));
        }
        let (mut h, gamma_in) = self.gamma_in.forward(z)?;
        let mut hidden = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            let (next, cache) = layer.forward(&h)?;
            hidden.push(cache);
            h = next;
        }
        let (beta, gamma_out) = self.gamma_out.forward(&h)?;
        Ok((
            beta,
            BetaCache {
                gamma_in,
                hidden,
                gamma_out,
            },
        ))
    }

    /// Returns `dz` and gradients in [`Parameters`] order.
    pub fn backward(&self, cache: &BetaCache, upstream: &Matrix) -> Result<(Matrix, GradientSet)> {
        if cache.hidden.len() != self.hidden.len() {
            return Err(Error::StaleCache);
        }
        let (mut d, g_out) = self.gamma_out.backward(&cache.gamma_out, upstream)?;
        let mut hidden_grads = Vec::with_capacity(self.hidden.len());
        for (layer, c) in self.hidden.iter().zip(&cache.hidden).rev() {
            let (dprev, g) = layer.backward(c, &d)?;
            hidden_grads.push(g);
            d = dprev;
        }
        let (dz, g_in) = self.gamma_in.backward(&cache.gamma_in, &d)?;
        let mut tensors = g_in;
        for g in hidden_grads.into_iter().rev() {
            tensors.extend(g);
        }
        tensors.extend(g_out);
        Ok((dz, GradientSet { tensors }))
    }
}

impl Parameters for BetaNetwork {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = self.gamma_in.params();
        for h in &self.hidden {
            out.extend(h.params());
        }
        out.extend(self.gamma_out.params());
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.gamma_in.params_mut();
        for h in &mut self.hidden {
            out.extend(h.params_mut());
        }
        out.extend(self.gamma_out.params_mut());
        out
    }
}

/// Spline grid parameters shared by every KAN edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub intervals: usize,
    pub degree: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lo: -1.0,
            hi: 1.0,
            intervals: 5,
            degree: 3,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<SplineGrid> {
        SplineGrid::new(self.lo, self.hi, self.intervals, self.degree)
    }
}

/// Architecture of a beta network: `P -> embed_dim -> hidden... -> K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub kind: NetKind,
    pub n_characteristics: usize,
    pub n_factors: usize,
    pub embed_dim: usize,
    /// Output widths of the hidden (KAN or ReLU) layers; empty for `linear`.
    pub hidden: Vec<usize>,
    pub grid: GridSpec,
    pub spline_noise: f64,
}

impl ArchSpec {
    /// Defaults per kind: KAN `P -> 16 -> KAN 16 -> K`, MLP `P -> 32 -> ReLU
    /// 16 -> K`, linear `P -> 16 -> K`.
    pub fn new(kind: NetKind, n_characteristics: usize, n_factors: usize) -> Self {
        let (embed_dim, hidden) = match kind {
            NetKind::Kan => (16, vec![16]),
            NetKind::Mlp => (32, vec![16]),
            NetKind::Linear => (16, Vec::new()),
        };
        ArchSpec {
            kind,
            n_characteristics,
            n_factors,
            embed_dim,
            hidden,
            grid: GridSpec::default(),
            spline_noise: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_characteristics == 0 || self.n_factors == 0 || self.embed_dim == 0 {
            return Err(Error::InvalidArgument(
                "characteristics, factors and embedding width must all be at least 1".into(),
            ));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden layer widths must be at least 1".into()));
        }
        match (self.kind, self.hidden.is_empty()) {
            (NetKind::Linear, false) => Err(Error::InvalidArgument("linear networks take no hidden layers".into())),
            (NetKind::Kan | NetKind::Mlp, true) => Err(Error::InvalidArgument(alloc::format!(
                "{} networks need at least one hidden layer",
                self.kind
            ))),
            _ => Ok(()),
        }
    }
}
