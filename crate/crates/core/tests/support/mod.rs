//! Independent reference implementations used as test oracles. None of these
//! call into the library's numerical kernels.
#![allow(dead_code)]

use kanfactor_core::nets::{Activation, ArchSpec, GridSpec, HiddenLayer};
use kanfactor_core::{BetaNetwork, ConditionalAutoencoder, Matrix, NetKind, Parameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Clamped uniform knot vector built from scratch.
pub fn clamped_knots(lo: f64, hi: f64, g: usize, k: usize) -> Vec<f64> {
    let mut t = vec![lo; k + 1];
    for i in 1..g {
        t.push(lo + (hi - lo) * i as f64 / g as f64);
    }
    t.extend(std::iter::repeat(hi).take(k + 1));
    t
}

/// Textbook recursive Cox-de Boor definition; the last non-degenerate degree-0
/// interval is closed on the right so the basis is defined at `hi`.
pub fn cox_de_boor(t: &[f64], m: usize, k: usize, x: f64) -> f64 {
    if k == 0 {
        let last = t.iter().rposition(|&v| v < t[t.len() - 1]).unwrap();
        let inside = t[m] <= x && (x < t[m + 1] || (m == last && x == t[m + 1]));
        return if inside && t[m] < t[m + 1] { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let d1 = t[m + k] - t[m];
    if d1 > 0.0 {
        v += (x - t[m]) / d1 * cox_de_boor(t, m, k - 1, x);
    }
    let d2 = t[m + k + 1] - t[m + 1];
    if d2 > 0.0 {
        v += (t[m + k + 1] - x) / d2 * cox_de_boor(t, m + 1, k - 1, x);
    }
    v
}

pub fn cox_de_boor_all(lo: f64, hi: f64, g: usize, k: usize, x: f64) -> Vec<f64> {
    let t = clamped_knots(lo, hi, g, k);
    let xc = x.clamp(lo, hi);
    (0..g + k).map(|m| cox_de_boor(&t, m, k, xc)).collect()
}

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// Brute-force edge value from the recursive basis.
pub fn edge_oracle(lo: f64, hi: f64, g: usize, k: usize, coeffs: &[f64], wb: f64, x: f64) -> f64 {
    let b = cox_de_boor_all(lo, hi, g, k, x);
    wb * silu(x) + coeffs.iter().zip(&b).map(|(c, b)| c * b).sum::<f64>()
}

/// Gaussian elimination with partial pivoting on a dense row-major system.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|c| a[i][c] * x[c]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// `(Z'Z + lambda I)^-1 Z'r` via explicit normal equations and elimination.
pub fn ridge_oracle(z: &[Vec<f64>], r: &[f64], lambda: f64) -> Vec<f64> {
    let p = z[0].len();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for (row, &ri) in z.iter().zip(r) {
        for i in 0..p {
            b[i] += row[i] * ri;
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    for (i, ai) in a.iter_mut().enumerate() {
        ai[i] += lambda;
    }
    gauss_solve(a, b)
}

/// Triple-loop matrix product.
pub fn matmul_oracle(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; b[0].len()]; a.len()];
    for i in 0..a.len() {
        for j in 0..b[0].len() {
            for k in 0..b.len() {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Relative error with an absolute floor: `|a - b| / max(|a|, |b|)`, or 0 when
/// the difference is below `floor`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    let d = (a - b).abs();
    if d <= floor {
        0.0
    } else {
        d / a.abs().max(b.abs())
    }
}

/// Central finite differences of `loss` with respect to every parameter.
pub fn finite_difference_grads<P: Parameters + Clone>(
    params: &P,
    h: f64,
    mut loss: impl FnMut(&P) -> f64,
) -> Vec<Vec<f64>> {
    let shapes: Vec<usize> = params.param_slices().iter().map(|s| s.len()).collect();
    let mut out = Vec::with_capacity(shapes.len());
    let mut work = params.clone();
    for (t, &len) in shapes.iter().enumerate() {
        let mut g = vec![0.0; len];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = work.param_slices()[t][i];
            work.param_slices_mut()[t][i] = orig + h;
            let up = loss(&work);
            work.param_slices_mut()[t][i] = orig - h;
            let down = loss(&work);
            work.param_slices_mut()[t][i] = orig;
            *gi = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Small random model of the given kind with randomized widths and depth.
pub fn random_model(kind: NetKind, seed: u64) -> ConditionalAutoencoder {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = rng.random_range(2..=6);
    let k = rng.random_range(1..=3);
    let d = rng.random_range(2..=4);
    let depth = if kind == NetKind::Linear { 0 } else { rng.random_range(1..=2) };
    let spec = ArchSpec {
        kind,
        n_characteristics: p,
        n_factors: k,
        embed_dim: d,
        hidden: (0..depth).map(|_| rng.random_range(2..=4)).collect(),
        grid: GridSpec {
            lo: -1.0,
            hi: 1.0,
            intervals: rng.random_range(3..=6),
            degree: 3,
        },
        spline_noise: 0.5,
    };
    let lambda = [0.0, 0.05, 0.5][rng.random_range(0..3)];
    let mut model = ConditionalAutoencoder::init(&spec, lambda, &mut rng).unwrap();
    // Random biases and base weights so no parameter sits at an init value.
    for s in model.param_slices_mut() {
        for v in s.iter_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    model
}

/// Inputs to every KAN layer and pre-activations of every ReLU layer for a
/// batch, computed by composing the public layer forwards.
pub fn kinks(net: &BetaNetwork, z: &Matrix) -> Vec<f64> {
    let mut out = Vec::new();
    let (mut h, _) = net.gamma_in().forward(z).unwrap();
    for layer in net.hidden() {
        match layer {
            HiddenLayer::Kan(l) => {
                let g = l.grid();
                out.extend(h.as_slice().iter().flat_map(|&v| [v - g.lo(), v - g.hi()]));
            }
            HiddenLayer::Mlp(l) => {
                if l.activation == Activation::Relu {
                    for b in 0..h.rows() {
                        for i in 0..l.weight.rows() {
                            let pre: f64 = l.bias[i] + l.weight.row(i).iter().zip(h.row(b)).map(|(w, x)| w * x).sum::<f64>();
                            out.push(pre);
                        }
                    }
                }
            }
        }
        h = layer.forward(&h).unwrap().0;
    }
    out
}
