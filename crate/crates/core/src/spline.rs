//! Clamped uniform B-spline bases and the learnable edge function
//! `phi(x) = w_b * silu(x) + sum_m c_m B_m(clamp(x))`.
//!
//! The spline term is evaluated at the input clamped to the grid; the silu base
//! term sees the raw input so that out-of-range activations keep a gradient.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Vector;
use crate::math;
use crate::{Error, Result};

/// Highest supported spline degree.
pub const MAX_DEGREE: usize = 7;

/// Uniform grid on `[lo, hi]` with a clamped knot vector: the end knots are
/// repeated `degree + 1` times, giving `intervals + degree` basis functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct SplineGrid {
    lo: f64,
    hi: f64,
    intervals: usize,
    degree: usize,
    knots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    lo: f64,
    hi: f64,
    intervals: usize,
    degree: usize,
}

impl TryFrom<GridRepr> for SplineGrid {
    type Error = Error;

    fn try_from(g: GridRepr) -> Result<Self> {
        SplineGrid::new(g.lo, g.hi, g.intervals, g.degree)
    }
}

impl From<SplineGrid> for GridRepr {
    fn from(g: SplineGrid) -> Self {
        GridRepr {
            lo: g.lo,
            hi: g.hi,
            intervals: g.intervals,
            degree: g.degree,
        }
    }
}

/// Non-zero basis values (and optionally derivatives) at one input.
///
/// `values[a]` belongs to basis index `start + a` for `a <= degree`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LocalBasis {
    pub start: usize,
    pub values: [f64; MAX_DEGREE + 1],
    pub derivs: [f64; MAX_DEGREE + 1],
    pub silu: f64,
    pub silu_deriv: f64,
}

impl SplineGrid {
    pub fn new(lo: f64, hi: f64, intervals: usize, degree: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(alloc::format!(
                "spline grid needs finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        if intervals == 0 {
            return Err(Error::InvalidArgument("spline grid needs at least one interval".into()));
        }
        if degree > MAX_DEGREE {
            return Err(Error::InvalidArgument(alloc::format!(
                "spline degree {degree} exceeds the supported maximum {MAX_DEGREE}"
            )));
        }
        let h = (hi - lo) / intervals as f64;
        let mut knots = Vec::with_capacity(intervals + 2 * degree + 1);
        knots.extend(core::iter::repeat(lo).take(degree));
        for j in 0..intervals {
            knots.push(lo + j as f64 * h);
        }
        knots.push(hi);
        knots.extend(core::iter::repeat(hi).take(degree));
        Ok(SplineGrid {
            lo,
            hi,
            intervals,
            degree,
            knots,
        })
    }

    #[inline]
    pub fn lo(&self) -> f64 {
        self.lo
    }

    #[inline]
    pub fn hi(&self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions, `intervals + degree`.
    #[inline]
    pub fn basis_count(&self) -> usize {
        self.intervals + self.degree
    }

    #[inline]
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    /// Support `[t_m, t_{m+degree+1}]` of basis function `m`.
    pub fn support(&self, m: usize) -> (f64, f64) {
        (self.knots[m], self.knots[m + self.degree + 1])
    }

    /// Knot span `s` with `t_s <= x < t_{s+1}`, the last span being closed.
    fn span(&self, x: f64) -> usize {
        let k = self.degree;
        let g = self.intervals;
        let h = (self.hi - self.lo) / g as f64;
        let mut j = (math::floor((x - self.lo) / h) as isize).clamp(0, g as isize - 1) as usize;
        while j > 0 && x < self.knots[k + j] {
            j -= 1;
        }
        while j + 1 < g && x >= self.knots[k + j + 1] {
            j += 1;
        }
        k + j
    }

    /// Non-zero basis functions of `degree` on span `s` (triangular scheme).
    fn nonzero(&self, s: usize, degree: usize, x: f64, out: &mut [f64; MAX_DEGREE + 1]) {
        let t = &self.knots;
        let mut left = [0.0; MAX_DEGREE + 1];
        let mut right = [0.0; MAX_DEGREE + 1];
        out[0] = 1.0;
        for j in 1..=degree {
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
    }

    pub(crate) fn local(&self, x: f64, with_derivs: bool) -> LocalBasis {
        let k = self.degree;
        let xc = self.clamp(x);
        let s = self.span(xc);
        let mut lb = LocalBasis {
            start: s - k,
            values: [0.0; MAX_DEGREE + 1],
            derivs: [0.0; MAX_DEGREE + 1],
            silu: math::silu(x),
            silu_deriv: 0.0,
        };
        self.nonzero(s, k, xc, &mut lb.values);
        if with_derivs {
            lb.silu_deriv = math::silu_deriv(x);
            if k > 0 && x >= self.lo && x <= self.hi {
                // dB_{m,k} = k/(t_{m+k}-t_m) B_{m,k-1} - k/(t_{m+k+1}-t_{m+1}) B_{m+1,k-1}
                let mut lower = [0.0; MAX_DEGREE + 1];
                self.nonzero(s, k - 1, xc, &mut lower);
                let t = &self.knots;
                let kf = k as f64;
                for a in 0..=k {
                    let m = s - k + a;
                    let mut d = 0.0;
                    if a >= 1 {
                        d += kf * lower[a - 1] / (t[m + k] - t[m]);
                    }
                    if a < k {
                        d -= kf * lower[a] / (t[m + k + 1] - t[m + 1]);
                    }
                    lb.derivs[a] = d;
                }
            }
        }
        lb
    }
}

/// All `intervals + degree` basis values at `clamp(x)`.
pub fn bspline_basis(x: f64, grid: &SplineGrid) -> Vector {
    let lb = grid.local(x, false);
    let mut out = vec![0.0; grid.basis_count()];
    out[lb.start..=lb.start + grid.degree].copy_from_slice(&lb.values[..=grid.degree]);
    out.into()
}

/// Derivatives of every basis function at `x`; zero outside `[lo, hi]`.
pub fn bspline_basis_deriv(x: f64, grid: &SplineGrid) -> Vector {
    let lb = grid.local(x, true);
    let mut out = vec![0.0; grid.basis_count()];
    out[lb.start..=lb.start + grid.degree].copy_from_slice(&lb.derivs[..=grid.degree]);
    out.into()
}

/// One learnable edge activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFunction {
    pub grid: SplineGrid,
    pub coeffs: Vec<f64>,
    pub base_weight: f64,
}

/// Upstream-scaled partials of an edge function.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineGrad {
    pub dx: f64,
    pub dcoeffs: Vector,
    pub dbase: f64,
}

impl SplineFunction {
    pub fn new(grid: SplineGrid, coeffs: Vec<f64>, base_weight: f64) -> Result<Self> {
        if coeffs.len() != grid.basis_count() {
            return Err(Error::shape("SplineFunction::new", grid.basis_count(), coeffs.len()));
        }
        if !base_weight.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("spline parameters"));
        }
        Ok(SplineFunction {
            grid,
            coeffs,
            base_weight,
        })
    }

    /// Edge with every parameter zero.
    pub fn zero(grid: SplineGrid) -> Self {
        let coeffs = vec![0.0; grid.basis_count()];
        SplineFunction {
            grid,
            coeffs,
            base_weight: 0.0,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let lb = self.grid.local(x, false);
        edge_value(&self.coeffs, self.base_weight, &lb, self.grid.degree)
    }

    pub fn grad(&self, x: f64, upstream: f64) -> SplineGrad {
        let lb = self.grid.local(x, true);
        let k = self.grid.degree;
        let mut dcoeffs = vec![0.0; self.grid.basis_count()];
        for a in 0..=k {
            dcoeffs[lb.start + a] = upstream * lb.values[a];
        }
        SplineGrad {
            dx: upstream * edge_slope(&self.coeffs, self.base_weight, &lb, k),
            dcoeffs: dcoeffs.into(),
            dbase: upstream * lb.silu,
        }
    }
}

#[inline]
pub(crate) fn edge_value(coeffs: &[f64], base_weight: f64, lb: &LocalBasis, degree: usize) -> f64 {
    let c = &coeffs[lb.start..=lb.start + degree];
    let spline: f64 = c.iter().zip(&lb.values).map(|(c, b)| c * b).sum();
    base_weight * lb.silu + spline
}

#[inline]
pub(crate) fn edge_slope(coeffs: &[f64], base_weight: f64, lb: &LocalBasis, degree: usize) -> f64 {
    let c = &coeffs[lb.start..=lb.start + degree];
    let spline: f64 = c.iter().zip(&lb.derivs).map(|(c, d)| c * d).sum();
    base_weight * lb.silu_deriv + spline
}

pub fn spline_eval(f: &SplineFunction, x: f64) -> f64 {
    f.eval(x)
}

pub fn spline_grad(f: &SplineFunction, x: f64, upstream: f64) -> SplineGrad {
    f.grad(x, upstream)
}

/// Edge with coefficients i.i.d. uniform in `[-noise_scale, noise_scale]` and
/// unit base weight.
pub fn init_spline(rng_seed: u64, grid: &SplineGrid, noise_scale: f64) -> Result<SplineFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    init_spline_with(&mut rng, grid, noise_scale)
}

pub(crate) fn init_spline_with<R: Rng + ?Sized>(
    rng: &mut R,
    grid: &SplineGrid,
    noise_scale: f64,
) -> Result<SplineFunction> {
    let coeffs = draw_uniform(rng, grid.basis_count(), noise_scale)?;
    Ok(SplineFunction {
        grid: grid.clone(),
        coeffs,
        base_weight: 1.0,
    })
}

pub(crate) fn draw_uniform<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Result<Vec<f64>> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!(
            "noise scale must be finite and non-negative, got {scale}"
        )));
    }
    if scale == 0.0 {
        return Ok(vec![0.0; n]);
    }
    Ok((0..n).map(|_| rng.random_range(-scale..=scale)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_grid() -> SplineGrid {
        SplineGrid::new(-1.0, 1.0, 5, 3).unwrap()
    }

    #[test]
    fn knot_vector_is_clamped_and_uniform() {
        let g = SplineGrid::new(0.0, 1.0, 4, 2).unwrap();
        assert_eq!(g.knots().len(), 4 + 2 * 2 + 1);
        assert_eq!(g.knots(), &[0.0, 0.0, 0.0, 0.25, 0.5, 0.75, 1.0, 1.0, 1.0]);
        assert_eq!(g.basis_count(), 6);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SplineGrid::new(1.0, 1.0, 3, 3).is_err());
        assert!(SplineGrid::new(0.0, 1.0, 0, 3).is_err());
        assert!(SplineGrid::new(0.0, 1.0, 3, MAX_DEGREE + 1).is_err());
    }

    #[test]
    fn degree_zero_indicators() {
        let g = SplineGrid::new(0.0, 1.0, 2, 0).unwrap();
        assert_eq!(&*bspline_basis(0.25, &g), &[1.0, 0.0]);
        assert_eq!(&*bspline_basis(0.75, &g), &[0.0, 1.0]);
        assert_eq!(&*bspline_basis(1.0, &g), &[0.0, 1.0]);
    }

    #[test]
    fn partition_of_unity_at_sample_points() {
        let g = default_grid();
        for i in 0..=100 {
            let x = -1.0 + 0.02 * i as f64;
            let s: f64 = bspline_basis(x, &g).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "x={x} sum={s}");
            let ds: f64 = bspline_basis_deriv(x, &g).iter().sum();
            assert!(ds.abs() < 1e-10, "x={x} dsum={ds}");
        }
    }

    #[test]
    fn hat_function_slopes() {
        let g = SplineGrid::new(0.0, 2.0, 4, 1).unwrap();
        // basis 2 is the hat centred on knot 1.0 with support [0.5, 1.5]
        let slope = 4.0 / 2.0;
        assert!((bspline_basis_deriv(0.7, &g)[2] - slope).abs() < 1e-12);
        assert!((bspline_basis_deriv(1.3, &g)[2] + slope).abs() < 1e-12);
    }

    #[test]
    fn derivative_vanishes_outside_grid() {
        let g = default_grid();
        assert!(bspline_basis_deriv(1.5, &g).iter().all(|&d| d == 0.0));
        assert!(bspline_basis_deriv(-3.0, &g).iter().all(|&d| d == 0.0));
        // clamped evaluation
        assert_eq!(bspline_basis(7.0, &g), bspline_basis(1.0, &g));
    }

    #[test]
    fn zero_and_silu_edges() {
        let g = default_grid();
        let zero = SplineFunction::zero(g.clone());
        assert_eq!(zero.eval(0.3), 0.0);
        assert_eq!(zero.eval(-4.0), 0.0);
        let mut silu = SplineFunction::zero(g);
        silu.base_weight = 1.0;
        assert_eq!(silu.eval(0.0), 0.0);
        let gr = silu.grad(0.0, 1.0);
        assert_eq!(gr.dx, 0.5);
        assert_eq!(gr.dbase, 0.0);
        let gr = silu.grad(0.4, 0.0);
        assert_eq!(gr.dx, 0.0);
        assert_eq!(gr.dbase, 0.0);
        assert!(gr.dcoeffs.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn silu_term_uses_raw_input() {
        let mut f = SplineFunction::zero(default_grid());
        f.base_weight = 1.0;
        let x = 3.0;
        assert_eq!(f.eval(x), math::silu(x));
        assert!((f.grad(x, 1.0).dx - math::silu_deriv(x)).abs() < 1e-15);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let g = default_grid();
        let zero = init_spline(3, &g, 0.0).unwrap();
        assert!(zero.coeffs.iter().all(|&c| c == 0.0));
        assert_eq!(zero.base_weight, 1.0);
        let a = init_spline(11, &g, 0.1).unwrap();
        let b = init_spline(11, &g, 0.1).unwrap();
        assert_eq!(a, b);
        assert!(a.coeffs.iter().all(|c| c.abs() <= 0.1));
        assert!(init_spline(11, &g, -0.1).is_err());
    }

    #[test]
    fn init_noise_has_zero_mean() {
        let g = SplineGrid::new(-1.0, 1.0, 9_997, 3).unwrap();
        let f = init_spline(5, &g, 0.1).unwrap();
        assert_eq!(f.coeffs.len(), 10_000);
        let mean = f.coeffs.iter().sum::<f64>() / f.coeffs.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!(f.coeffs.iter().all(|c| c.abs() <= 0.1));
    }
}
