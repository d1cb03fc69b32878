//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub fn sym(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn eigh(m: &Matrix) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(sym(m))
}

/// Rebuild `V diag(f(λ)) Vᵀ` from a symmetric eigen-decomposition.
pub fn spectral_map(m: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let e = eigh(m);
    let mut v = e.eigenvectors.clone();
    for (j, lam) in e.eigenvalues.iter().enumerate() {
        let s = f(*lam);
        v.column_mut(j).scale_mut(s);
    }
    sym(&(v * e.eigenvectors.transpose()))
}

pub fn sqrtm_psd(m: &Matrix) -> Matrix {
    spectral_map(m, |l| l.max(0.0).sqrt())
}

pub fn inv_sqrtm_pd(m: &Matrix) -> Result<Matrix> {
    let e = eigh(m);
    if e.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidParameter(
            "matrix is not positive definite".into(),
        ));
    }
    Ok(spectral_map(m, |l| 1.0 / l.sqrt()))
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    eigh(m).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &Matrix) -> f64 {
    eigh(m)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenvalue with a unit eigenvector.
pub fn top_eigenpair(m: &Matrix) -> (f64, Vector) {
    let e = eigh(m);
    let mut best = 0;
    for i in 1..e.eigenvalues.len() {
        if e.eigenvalues[i] > e.eigenvalues[best] {
            best = i;
        }
    }
    (e.eigenvalues[best], e.eigenvectors.column(best).into_owned())
}

pub fn is_psd(m: &Matrix, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > tol * scale {
        return false;
    }
    min_eigenvalue(m) >= -tol * scale
}

pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

pub fn clip_eigenvalues(m: &Matrix, lo: f64, hi: f64) -> Matrix {
    spectral_map(m, |l| l.clamp(lo, hi))
}

/// Column-major flattening of a square matrix.
pub fn vec_of(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

pub fn mat_of(v: &[f64], d: usize) -> Matrix {
    Matrix::from_column_slice(d, d, v)
}

/// Recover `d` from a flattened `d + d²` parameter length.
pub fn split_dim(n: usize) -> Option<usize> {
    let d = (((1 + 4 * n) as f64).sqrt() as usize).saturating_sub(1) / 2;
    (d.saturating_sub(1)..=d + 1).find(|&c| c > 0 && c + c * c == n)
}

pub fn square_dim(n: usize) -> Option<usize> {
    let d = (n as f64).sqrt().round() as usize;
    (d * d == n && d > 0).then_some(d)
}

pub fn log_sum_exp(weights: &Vector, h: &Vector) -> f64 {
    let m = h
        .iter()
        .zip(weights.iter())
        .filter(|(_, w)| **w > 0.0)
        .map(|(x, _)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return f64::NEG_INFINITY;
    }
    let s: f64 = h
        .iter()
        .zip(weights.iter())
        .filter(|(_, w)| **w > 0.0)
        .map(|(x, w)| w * (x - m).exp())
        .sum();
    m + s.ln()
}

/// Upper tail of the standard normal law, `∫_s^∞ (2π)^{-1/2} e^{-r²/2} dr`.
pub fn normal_upper_tail(s: f64) -> f64 {
    0.5 * libm::erfc(s / std::f64::consts::SQRT_2)
}

pub fn inf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

pub fn concat(parts: &[&Vector]) -> Vector {
    let n = parts.iter().map(|p| p.len()).sum();
    let mut out = Vector::zeros(n);
    let mut k = 0;
    for p in parts {
        out.rows_mut(k, p.len()).copy_from(*p);
        k += p.len();
    }
    out
}

pub fn block(v: &Vector, start: usize, len: usize) -> Vector {
    v.rows(start, len).into_owned()
}
