use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, Matrix, Vector};
use crate::math;
use crate::spline::draw_uniform;
use crate::{Error, Result};

/// Bias-free linear map `y = x W'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    pub weight: Matrix,
}

#[derive(Debug, Clone)]
pub struct LinearCache {
    x: Matrix,
}

/// Glorot-uniform matrix of shape `n_out x n_in`.
pub(crate) fn glorot<R: Rng + ?Sized>(rng: &mut R, n_out: usize, n_in: usize) -> Matrix {
    let a = math::sqrt(6.0 / (n_in + n_out) as f64);
    let data = draw_uniform(rng, n_out * n_in, a).expect("glorot bound is finite");
    Matrix::from_raw(n_out, n_in, data)
}

/// `x W'` for `x: batch x n_in`, `w: n_out x n_in`.
fn affine(x: &Matrix, w: &Matrix, op: &'static str) -> Result<Matrix> {
    if x.cols() != w.cols() {
        return Err(Error::shape(op, w.cols(), x.cols()));
    }
    let mut y = Matrix::zeros(x.rows(), w.rows());
    for b in 0..x.rows() {
        let xb = x.row(b);
        for (o, out) in y.row_mut(b).iter_mut().enumerate() {
            *out = dot(xb, w.row(o));
        }
    }
    Ok(y)
}

/// Returns `(upstream W, upstream' x)`.
fn affine_backward(x: &Matrix, w: &Matrix, upstream: &Matrix, op: &'static str) -> Result<(Matrix, Matrix)> {
    if upstream.rows() != x.rows() || upstream.cols() != w.rows() {
        return Err(Error::shape(
            op,
            format_args!("{}x{}", x.rows(), w.rows()),
            format_args!("{}x{}", upstream.rows(), upstream.cols()),
        ));
    }
    let mut dx = Matrix::zeros(x.rows(), w.cols());
    let mut dw = Matrix::zeros(w.rows(), w.cols());
    for b in 0..x.rows() {
        let xb = x.row(b);
        let ub = upstream.row(b);
        let dxb = dx.row_mut(b);
        for (o, &u) in ub.iter().enumerate() {
            for (d, &wv) in dxb.iter_mut().zip(w.row(o)) {
                *d += u * wv;
            }
        }
        for (o, &u) in ub.iter().enumerate() {
            for (d, &xv) in dw.row_mut(o).iter_mut().zip(xb) {
                *d += u * xv;
            }
        }
    }
    Ok((dx, dw))
}

impl LinearLayer {
    pub fn new(weight: Matrix) -> Self {
        LinearLayer { weight }
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, n_in: usize, n_out: usize) -> Self {
        LinearLayer {
            weight: glorot(rng, n_out, n_in),
        }
    }

    #[inline]
    pub fn n_in(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn n_out(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, LinearCache)> {
        let y = affine(x, &self.weight, "linear_forward")?;
        Ok((y, LinearCache { x: x.clone() }))
    }

    /// Returns `dx` and `[dweight]`.
    pub fn backward(&self, cache: &LinearCache, upstream: &Matrix) -> Result<(Matrix, Vec<Vec<f64>>)> {
        let (dx, dw) = affine_backward(&cache.x, &self.weight, upstream, "linear_backward")?;
        Ok((dx, vec![dw.into_vec()]))
    }

    pub(crate) fn params(&self) -> Vec<&[f64]> {
        vec![self.weight.as_slice()]
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// Dense layer `y = act(x W' + b)` used by the MLP baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpLayer {
    pub weight: Matrix,
    pub bias: Vector,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    x: Matrix,
    pre: Matrix,
}

impl MlpLayer {
    pub fn new(weight: Matrix, bias: Vector, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::shape("MlpLayer::new", weight.rows(), bias.len()));
        }
        Ok(MlpLayer {
            weight,
            bias,
            activation,
        })
    }

    /// Glorot weights and zero bias.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, n_in: usize, n_out: usize, activation: Activation) -> Self {
        MlpLayer {
            weight: glorot(rng, n_out, n_in),
            bias: Vector::zeros(n_out),
            activation,
        }
    }

    #[inline]
    pub fn n_in(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn n_out(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        let mut pre = affine(x, &self.weight, "mlp_forward")?;
        for b in 0..pre.rows() {
            for (v, bias) in pre.row_mut(b).iter_mut().zip(self.bias.iter()) {
                *v += bias;
            }
        }
        let y = match self.activation {
            Activation::None => pre.clone(),
            Activation::Relu => {
                let data = pre.as_slice().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
                Matrix::from_raw(pre.rows(), pre.cols(), data)
            }
        };
        Ok((y, MlpCache { x: x.clone(), pre }))
    }

    /// Returns `dx` and `[dweight, dbias]`. The ReLU subgradient at 0 is 0.
    pub fn backward(&self, cache: &MlpCache, upstream: &Matrix) -> Result<(Matrix, Vec<Vec<f64>>)> {
        if upstream.shape() != cache.pre.shape() {
            return Err(Error::shape(
                "mlp_backward",
                format_args!("{}x{}", cache.pre.rows(), cache.pre.cols()),
                format_args!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        let masked = match self.activation {
            Activation::None => upstream.clone(),
            Activation::Relu => {
                let data = upstream
                    .as_slice()
                    .iter()
                    .zip(cache.pre.as_slice())
                    .map(|(&u, &p)| if p > 0.0 { u } else { 0.0 })
                    .collect();
                Matrix::from_raw(upstream.rows(), upstream.cols(), data)
            }
        };
        let (dx, dw) = affine_backward(&cache.x, &self.weight, &masked, "mlp_backward")?;
        let mut db = vec![0.0; self.n_out()];
        for b in 0..masked.rows() {
            for (d, &g) in db.iter_mut().zip(masked.row(b)) {
                *d += g;
            }
        }
        Ok((dx, vec![dw.into_vec(), db]))
    }

    pub(crate) fn params(&self) -> Vec<&[f64]> {
        vec![self.weight.as_slice(), &self.bias]
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), &mut self.bias]
    }
}
