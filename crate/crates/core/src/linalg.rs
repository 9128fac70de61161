//! Dense row-major linear algebra: products, Cholesky solves and the ridge
//! regression behind the characteristic-portfolio reduction.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

/// Relative pivot threshold below which `Z'Z` is treated as singular when no
/// ridge penalty is applied.
const RANK_TOL: f64 = 1e-12;

/// Tolerance for the symmetry precondition of [`spd_solve`].
const SYMMETRY_TOL: f64 = 1e-10;

/// Dense matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<MatrixRepr> for Matrix {
    type Error = Error;

    fn try_from(repr: MatrixRepr) -> Result<Self> {
        Matrix::new(repr.rows, repr.cols, repr.data)
    }
}

impl From<Matrix> for MatrixRepr {
    fn from(m: Matrix) -> Self {
        MatrixRepr {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("Matrix::new", rows * cols, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix data"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix::from_raw(rows, cols, data)
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::shape("Matrix::from_rows", cols, row.len()));
            }
            data.extend_from_slice(row);
        }
        Matrix::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vector {
        Vector((0..self.rows).map(|r| self.get(r, c)).collect())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    /// `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.cols {
            return Err(Error::shape("matvec", self.cols, x.len()));
        }
        Ok(Vector(
            (0..self.rows).map(|r| dot(self.row(r), x)).collect(),
        ))
    }

    /// `self' * x` without materializing the transpose.
    pub fn tr_matvec(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.rows {
            return Err(Error::shape("tr_matvec", self.rows, x.len()));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * xr;
            }
        }
        Ok(Vector(out))
    }

    /// `self' * self`, the Gram matrix of the columns.
    pub fn gram(&self) -> Matrix {
        let p = self.cols;
        let mut g = Matrix::zeros(p, p);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..p {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                for j in i..p {
                    g.data[i * p + j] += ri * row[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                g.data[i * p + j] = g.data[j * p + i];
            }
        }
        g
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Dense real vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Wraps `data`, rejecting non-finite entries.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector data"));
        }
        Ok(Vector(data))
    }

    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm2(&self) -> f64 {
        math::sqrt(dot(&self.0, &self.0))
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Matrix product `a * b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(
            "matmul",
            format_args!("{} rows on the right", a.cols),
            b.rows,
        ));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// In-place lower Cholesky factor. A pivot at or below `min_pivot` fails.
fn cholesky(a: &Matrix, min_pivot: f64) -> core::result::Result<Matrix, (usize, f64)> {
    let n = a.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > min_pivot) {
            return Err((j, d));
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

fn cholesky_substitute(l: &Matrix, b: &[f64]) -> Vector {
    let n = l.rows;
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l.get(k, i) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    Vector(y)
}

/// Solves `a x = b` for symmetric positive definite `a` by Cholesky.
pub fn spd_solve(a: &Matrix, b: &[f64]) -> Result<Vector> {
    if a.rows != a.cols {
        return Err(Error::shape(
            "spd_solve",
            "square matrix",
            format_args!("{}x{}", a.rows, a.cols),
        ));
    }
    if b.len() != a.rows {
        return Err(Error::shape("spd_solve", a.rows, b.len()));
    }
    for i in 0..a.rows {
        for j in 0..i {
            let (x, y) = (a.get(i, j), a.get(j, i));
            if (x - y).abs() > SYMMETRY_TOL * f64::max(1.0, f64::max(x.abs(), y.abs())) {
                return Err(Error::NotSymmetric { row: i, col: j });
            }
        }
    }
    let l = cholesky(a, 0.0).map_err(|(pivot, value)| Error::NotPositiveDefinite { pivot, value })?;
    Ok(cholesky_substitute(&l, b))
}

/// Ridge regression `(Z'Z + lambda I)^{-1} Z'r`.
///
/// With `lambda == 0` this is ordinary least squares, and a numerically
/// singular `Z'Z` is reported as [`Error::RankDeficient`] instead of being
/// regularized behind the caller's back.
pub fn ridge_solve(z: &Matrix, r: &[f64], lambda: f64) -> Result<Vector> {
    if z.rows != r.len() {
        return Err(Error::shape("ridge_solve", z.rows, r.len()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!(
            "ridge lambda must be finite and non-negative, got {lambda}"
        )));
    }
    let mut gram = z.gram();
    let p = z.cols;
    let max_diag = (0..p).map(|i| gram.get(i, i)).fold(0.0, f64::max);
    for i in 0..p {
        gram.data[i * p + i] += lambda;
    }
    let rhs = z.tr_matvec(r)?;
    let min_pivot = if lambda == 0.0 { RANK_TOL * max_diag } else { 0.0 };
    let l = cholesky(&gram, min_pivot).map_err(|(pivot, value)| {
        if lambda == 0.0 {
            Error::RankDeficient { column: pivot }
        } else {
            Error::NotPositiveDefinite { pivot, value }
        }
    })?;
    Ok(cholesky_substitute(&l, &rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_product() {
        let b = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Matrix::identity(2), &b).unwrap(), b);
    }

    #[test]
    fn row_times_column() {
        let a = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[[3.0], [4.0]]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().as_slice(), &[11.0]);
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(matmul(&a, &a), Err(Error::Shape { .. })));
    }

    #[test]
    fn new_rejects_nan_and_bad_length() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-14)
    }

    #[test]
    fn spd_identity_and_scaled() {
        let x = spd_solve(&Matrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(&*x, &[1.0, 2.0, 3.0]);
        let x = spd_solve(&Matrix::identity(2).scaled(2.0), &[4.0, 6.0]).unwrap();
        assert!(close(&x, &[2.0, 3.0]));
    }

    #[test]
    fn spd_reports_failing_pivot() {
        let a = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 2.0], [0.0, 2.0, 1.0]]).unwrap();
        match spd_solve(&a, &[1.0, 1.0, 1.0]) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spd_rejects_asymmetric() {
        let a = Matrix::from_rows(&[[2.0, 1.0], [0.0, 2.0]]).unwrap();
        assert!(matches!(spd_solve(&a, &[1.0, 1.0]), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn ridge_identity_cases() {
        let z = Matrix::identity(2);
        assert_eq!(&*ridge_solve(&z, &[1.0, 2.0], 0.0).unwrap(), &[1.0, 2.0]);
        assert!(close(&ridge_solve(&z, &[1.0, 2.0], 1.0).unwrap(), &[0.5, 1.0]));
    }

    #[test]
    fn ridge_rank_deficiency_needs_lambda() {
        let z = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        let r = [1.0, 0.0, 2.0];
        assert!(matches!(
            ridge_solve(&z, &r, 0.0),
            Err(Error::RankDeficient { column: 1 })
        ));
        let x = ridge_solve(&z, &r, 0.01).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
        assert!(ridge_solve(&z, &r, -1.0).is_err());
    }

    #[test]
    fn matrix_serde_validates() {
        let m = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let repr: MatrixRepr = m.clone().into();
        assert_eq!(Matrix::try_from(repr).unwrap(), m);
        let bad = MatrixRepr { rows: 2, cols: 2, data: vec![0.0] };
        assert!(Matrix::try_from(bad).is_err());
    }
}
