//! Small dense linear-algebra layer over `faer`.
//!
//! Everything in the crate works with `Mat<c64>`. Superoperators act on
//! row-major vectorized matrices: `vec(|n><m|)` has index `n * d + m`, so
//! `vec(A X B) = (A ⊗ Bᵀ) vec(X)`.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};

use crate::error::{Error, Result};

pub use faer::c64;

pub type CMat = Mat<c64>;

#[inline]
pub fn c(re: f64, im: f64) -> c64 {
    c64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> c64 {
    c64::new(x, 0.0)
}

pub const I: c64 = c64 { re: 0.0, im: 1.0 };
pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };

pub fn identity(d: usize) -> CMat {
    Mat::from_fn(d, d, |i, j| if i == j { ONE } else { ZERO })
}

pub fn diag_real(values: &[f64]) -> CMat {
    let d = values.len();
    Mat::from_fn(d, d, |i, j| if i == j { re(values[i]) } else { ZERO })
}

pub fn from_real(m: &Mat<f64>) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| re(m[(i, j)]))
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint().to_owned()
}

pub fn transpose(m: &CMat) -> CMat {
    m.transpose().to_owned()
}

pub fn scale(m: &CMat, s: c64) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s)
}

/// `sum_k coeffs[k] * mats[k]` for equally shaped matrices.
pub fn lincomb(terms: &[(c64, &CMat)]) -> CMat {
    let (r, cols) = (terms[0].1.nrows(), terms[0].1.ncols());
    Mat::from_fn(r, cols, |i, j| {
        terms.iter().map(|(s, m)| *s * m[(i, j)]).sum()
    })
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn trace(m: &CMat) -> c64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// `Tr(a b)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> c64 {
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn max_abs(m: &CMat) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            best = best.max(m[(i, j)].norm());
        }
    }
    best
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            best = best.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    best
}

pub fn frobenius(m: &CMat) -> f64 {
    m.norm_l2()
}

/// Maximum absolute column sum.
pub fn norm_1(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    let mut best = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            best = best.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    best
}

pub fn hermitian_part(m: &CMat) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

/// Row-major vectorization.
pub fn vectorize(m: &CMat) -> Vec<c64> {
    let (r, cols) = (m.nrows(), m.ncols());
    let mut v = Vec::with_capacity(r * cols);
    for i in 0..r {
        for j in 0..cols {
            v.push(m[(i, j)]);
        }
    }
    v
}

pub fn unvectorize(v: &[c64], d: usize) -> CMat {
    Mat::from_fn(d, d, |i, j| v[i * d + j])
}

pub fn mat_vec(m: &CMat, v: &[c64]) -> Vec<c64> {
    let mut out = vec![ZERO; m.nrows()];
    for j in 0..m.ncols() {
        let x = v[j];
        if x == ZERO {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)] * x;
        }
    }
    out
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenSolver)?;
    let s = evd.S().column_vector();
    let values = (0..m.nrows()).map(|i| s[i].re).collect();
    Ok((values, evd.U().to_owned()))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(m: &CMat) -> Result<Vec<f64>> {
    let vals = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::EigenSolver)?;
    Ok(vals)
}

/// General (non-Hermitian) eigendecomposition: eigenvalues and right eigenvector columns.
pub fn eig(m: &CMat) -> Result<(Vec<c64>, CMat)> {
    let evd = m.eigen().map_err(|_| Error::EigenSolver)?;
    let s = evd.S().column_vector();
    let values = (0..m.nrows()).map(|i| s[i]).collect();
    Ok((values, evd.U().to_owned()))
}

pub fn eig_real(m: &Mat<f64>) -> Result<(Vec<c64>, CMat)> {
    let evd = m.eigen().map_err(|_| Error::EigenSolver)?;
    let s = evd.S().column_vector();
    let values = (0..m.nrows()).map(|i| s[i]).collect();
    Ok((values, evd.U().to_owned()))
}

pub fn eigh_real(m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenSolver)?;
    let s = evd.S().column_vector();
    let values = (0..m.nrows()).map(|i| s[i]).collect();
    Ok((values, evd.U().to_owned()))
}

pub fn inverse(m: &CMat) -> CMat {
    m.partial_piv_lu().inverse()
}

/// Inverse of an eigenvector matrix together with a condition estimate.
///
/// Rows are equilibrated before inversion so that the estimate measures
/// near-defectiveness rather than the (often enormous) spread of row scales
/// that thermal weights put into the eigenvectors.
pub fn equilibrated_inverse(v: &CMat) -> (CMat, f64) {
    let n = v.nrows();
    let row_scale: Vec<f64> = (0..n)
        .map(|i| {
            let m = (0..n).map(|j| v[(i, j)].norm()).fold(0.0, f64::max);
            if m > 0.0 {
                1.0 / m
            } else {
                1.0
            }
        })
        .collect();
    let scaled = Mat::from_fn(n, n, |i, j| v[(i, j)] * row_scale[i]);
    let inv_scaled = inverse(&scaled);
    let cond = norm_1(&scaled) * norm_1(&inv_scaled);
    // v^-1 = (D v)^-1 D
    let inv = Mat::from_fn(n, n, |i, j| inv_scaled[(i, j)] * row_scale[j]);
    (inv, if cond.is_finite() { cond } else { f64::INFINITY })
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let norm = norm_1(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = scale(a, re(0.5f64.powi(squarings)));
    let b = PADE13.map(re);
    let id = identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = lincomb(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)]);
    let u_poly = &a6 * &inner_u + lincomb(&[(b[7], &a6), (b[5], &a4), (b[3], &a2), (b[1], &id)]);
    let u = &a * &u_poly;
    let inner_v = lincomb(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)]);
    let v = &a6 * &inner_v + lincomb(&[(b[6], &a6), (b[4], &a4), (b[2], &a2), (b[0], &id)]);

    let denom = &v - &u;
    let numer = &v + &u;
    let mut result = denom.partial_piv_lu().solve(&numer);
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

pub fn expm_real(a: &Mat<f64>) -> Mat<f64> {
    let e = expm(&from_real(a));
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| e[(i, j)].re)
}

/// Greedy multiset distance between two lists of complex numbers: every
/// element of `a` is matched to its nearest unused element of `b`; returns
/// the largest matched distance.
pub fn multiset_distance(a: &[c64], b: &[c64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut a_sorted = a.to_vec();
    a_sorted.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in &a_sorted {
        let mut best = (f64::INFINITY, usize::MAX);
        for (j, y) in b.iter().enumerate() {
            if !used[j] {
                let dist = (x - y).norm();
                if dist < best.0 {
                    best = (dist, j);
                }
            }
        }
        used[best.1] = true;
        worst = worst.max(best.0);
    }
    worst
}
