use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::spline::{draw_uniform, edge_slope, edge_value, SplineFunction, SplineGrid};
use crate::{Error, Result};

/// KAN layer: `y_i = sum_j phi_ij(x_j)` with one spline edge per (output,
/// input) pair. All edges share one grid; parameters are stored flat, edge
/// `(i, j)` owning `coeffs[(i * n_in + j) * basis_count..][..basis_count]`
/// and `base_weights[i * n_in + j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KanLayer {
    n_in: usize,
    n_out: usize,
    grid: SplineGrid,
    coeffs: Vec<f64>,
    base_weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct KanCache {
    x: Matrix,
}

impl KanLayer {
    /// Builds a layer from an `n_out x n_in` grid of edges given row-major by
    /// output node. Every edge must use the same grid.
    pub fn from_edges(n_in: usize, n_out: usize, edges: Vec<SplineFunction>) -> Result<Self> {
        if edges.len() != n_in * n_out {
            return Err(Error::shape("KanLayer::from_edges", n_in * n_out, edges.len()));
        }
        let grid = match edges.first() {
            Some(e) => e.grid.clone(),
            None => return Err(Error::Empty("KAN layer edges")),
        };
        let mut coeffs = Vec::with_capacity(edges.len() * grid.basis_count());
        let mut base_weights = Vec::with_capacity(edges.len());
        for e in &edges {
            if e.grid != grid {
                return Err(Error::InvalidArgument("all edges of a KAN layer must share one grid".into()));
            }
            coeffs.extend_from_slice(&e.coeffs);
            base_weights.push(e.base_weight);
        }
        let layer = KanLayer {
            n_in,
            n_out,
            grid,
            coeffs,
            base_weights,
        };
        layer.validate()?;
        Ok(layer)
    }

    /// Layer whose edges are all identically zero.
    pub fn zeros(n_in: usize, n_out: usize, grid: SplineGrid) -> Self {
        let nb = grid.basis_count();
        KanLayer {
            n_in,
            n_out,
            grid,
            coeffs: vec![0.0; n_in * n_out * nb],
            base_weights: vec![0.0; n_in * n_out],
        }
    }

    /// Each edge gets unit base weight and coefficients uniform in
    /// `[-noise_scale, noise_scale]`.
    pub fn init<R: Rng + ?Sized>(
        rng: &mut R,
        n_in: usize,
        n_out: usize,
        grid: SplineGrid,
        noise_scale: f64,
    ) -> Result<Self> {
        let nb = grid.basis_count();
        let mut coeffs = Vec::with_capacity(n_in * n_out * nb);
        for _ in 0..n_in * n_out {
            coeffs.extend(draw_uniform(rng, nb, noise_scale)?);
        }
        Ok(KanLayer {
            n_in,
            n_out,
            grid,
            coeffs,
            base_weights: vec![1.0; n_in * n_out],
        })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let edges = self.n_in * self.n_out;
        if self.base_weights.len() != edges {
            return Err(Error::shape("KanLayer base weights", edges, self.base_weights.len()));
        }
        if self.coeffs.len() != edges * self.grid.basis_count() {
            return Err(Error::shape(
                "KanLayer coefficients",
                edges * self.grid.basis_count(),
                self.coeffs.len(),
            ));
        }
        if self.coeffs.iter().chain(&self.base_weights).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("KAN layer parameters"));
        }
        Ok(())
    }

    #[inline]
    pub fn n_in(&self) -> usize {
        self.n_in
    }

    #[inline]
    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn grid(&self) -> &SplineGrid {
        &self.grid
    }

    /// Edge from input `j` to output `i`.
    pub fn edge(&self, i: usize, j: usize) -> SplineFunction {
        let nb = self.grid.basis_count();
        let e = i * self.n_in + j;
        SplineFunction {
            grid: self.grid.clone(),
            coeffs: self.coeffs[e * nb..(e + 1) * nb].to_vec(),
            base_weight: self.base_weights[e],
        }
    }

    pub fn set_edge(&mut self, i: usize, j: usize, edge: &SplineFunction) -> Result<()> {
        if edge.grid != self.grid {
            return Err(Error::InvalidArgument("edge grid differs from the layer grid".into()));
        }
        let nb = self.grid.basis_count();
        let e = i * self.n_in + j;
        self.coeffs[e * nb..(e + 1) * nb].copy_from_slice(&edge.coeffs);
        self.base_weights[e] = edge.base_weight;
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, KanCache)> {
        if x.cols() != self.n_in {
            return Err(Error::shape("kan_layer_forward", self.n_in, x.cols()));
        }
        let nb = self.grid.basis_count();
        let k = self.grid.degree();
        let mut y = Matrix::zeros(x.rows(), self.n_out);
        for b in 0..x.rows() {
            let yb = y.row_mut(b);
            for (j, &xv) in x.row(b).iter().enumerate() {
                let lb = self.grid.local(xv, false);
                for (i, out) in yb.iter_mut().enumerate() {
                    let e = i * self.n_in + j;
                    *out += edge_value(&self.coeffs[e * nb..(e + 1) * nb], self.base_weights[e], &lb, k);
                }
            }
        }
        Ok((y, KanCache { x: x.clone() }))
    }

    /// Returns `dx` and `[dcoeffs, dbase_weights]` accumulated over the batch.
    pub fn backward(&self, cache: &KanCache, upstream: &Matrix) -> Result<(Matrix, Vec<Vec<f64>>)> {
        let x = &cache.x;
        if upstream.rows() != x.rows() || upstream.cols() != self.n_out {
            return Err(Error::shape(
                "kan_layer_backward",
                format_args!("{}x{}", x.rows(), self.n_out),
                format_args!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        let nb = self.grid.basis_count();
        let k = self.grid.degree();
        let mut dx = Matrix::zeros(x.rows(), self.n_in);
        let mut dcoeffs = vec![0.0; self.coeffs.len()];
        let mut dbase = vec![0.0; self.base_weights.len()];
        for b in 0..x.rows() {
            let ub = upstream.row(b);
            for (j, &xv) in x.row(b).iter().enumerate() {
                let lb = self.grid.local(xv, true);
                let mut acc = 0.0;
                for (i, &u) in ub.iter().enumerate() {
                    let e = i * self.n_in + j;
                    let c = &self.coeffs[e * nb..(e + 1) * nb];
                    acc += u * edge_slope(c, self.base_weights[e], &lb, k);
                    let dc = &mut dcoeffs[e * nb + lb.start..=e * nb + lb.start + k];
                    for (d, &bv) in dc.iter_mut().zip(&lb.values) {
                        *d += u * bv;
                    }
                    dbase[e] += u * lb.silu;
                }
                dx.set(b, j, acc);
            }
        }
        Ok((dx, vec![dcoeffs, dbase]))
    }

    pub(crate) fn params(&self) -> Vec<&[f64]> {
        vec![&self.coeffs, &self.base_weights]
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.coeffs, &mut self.base_weights]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SplineGrid {
        SplineGrid::new(-1.0, 1.0, 5, 3).unwrap()
    }

    #[test]
    fn zero_edges_give_zero_output() {
        let layer = KanLayer::zeros(3, 2, grid());
        let x = Matrix::from_rows(&[[0.1, -0.7, 2.0], [0.0, 0.5, -3.0]]).unwrap();
        let (y, _) = layer.forward(&x).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        use rand::SeedableRng;
        let layer = KanLayer::init(&mut rng, 2, 3, grid(), 0.1).unwrap();
        let x = Matrix::from_rows(&[[0.3, -0.2], [0.9, 0.1]]).unwrap();
        let (_, cache) = layer.forward(&x).unwrap();
        let (dx, grads) = layer.backward(&cache, &Matrix::zeros(2, 3)).unwrap();
        assert!(dx.as_slice().iter().all(|&v| v == 0.0));
        assert!(grads.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn single_edge_matches_spline_grad() {
        let edge = SplineFunction::new(grid(), vec![0.3, -0.1, 0.4, 0.2, -0.5, 0.7, 0.05, -0.2], 0.8).unwrap();
        let layer = KanLayer::from_edges(1, 1, vec![edge.clone()]).unwrap();
        let x = Matrix::from_rows(&[[0.37]]).unwrap();
        let (y, cache) = layer.forward(&x).unwrap();
        assert_eq!(y.get(0, 0), edge.eval(0.37));
        let (dx, grads) = layer.backward(&cache, &Matrix::from_rows(&[[1.7]]).unwrap()).unwrap();
        let g = edge.grad(0.37, 1.7);
        assert_eq!(dx.get(0, 0), g.dx);
        assert_eq!(&grads[0][..], &g.dcoeffs[..]);
        assert_eq!(grads[1][0], g.dbase);
    }

    #[test]
    fn edge_round_trip() {
        let mut layer = KanLayer::zeros(2, 2, grid());
        let edge = SplineFunction::new(grid(), vec![1.0; 8], 0.5).unwrap();
        layer.set_edge(1, 0, &edge).unwrap();
        assert_eq!(layer.edge(1, 0), edge);
        assert_eq!(layer.edge(0, 1), SplineFunction::zero(grid()));
    }

    #[test]
    fn rejects_mixed_grids_and_bad_shapes() {
        let a = SplineFunction::zero(grid());
        let b = SplineFunction::zero(SplineGrid::new(-2.0, 2.0, 5, 3).unwrap());
        assert!(KanLayer::from_edges(2, 1, vec![a.clone(), b]).is_err());
        assert!(KanLayer::from_edges(2, 2, vec![a]).is_err());
        let layer = KanLayer::zeros(2, 1, grid());
        assert!(layer.forward(&Matrix::zeros(1, 3)).is_err());
    }
}
