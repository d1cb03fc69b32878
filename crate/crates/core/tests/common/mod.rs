#![allow(dead_code)]

use detector_forge::families::{discrete_family, gaussian_param_set, sub_gaussian_family, sub_gaussian_params};
use detector_forge::linalg::{Matrix, Vector};
use detector_forge::{ConvexSet, RegularData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

pub fn eye(d: usize) -> Matrix {
    Matrix::identity(d, d)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_singleton(theta: &Vector, cov: &Matrix) -> RegularData {
    sub_gaussian_family(ConvexSet::singleton(sub_gaussian_params(theta, cov))).unwrap()
}

pub fn gaussian_box(lo: &Vector, hi: &Vector, cov: &Matrix) -> RegularData {
    let covs = ConvexSet::singleton(detector_forge::linalg::vec_of(cov));
    sub_gaussian_family(gaussian_param_set(ConvexSet::cuboid(lo.clone(), hi.clone()).unwrap(), covs).unwrap()).unwrap()
}

pub fn discrete_singleton(mu: &Vector) -> RegularData {
    discrete_family(ConvexSet::singleton(mu.clone())).unwrap()
}

pub fn random_vec(r: &mut impl Rng, d: usize, scale: f64) -> Vector {
    Vector::from_iterator(d, (0..d).map(|_| r.random_range(-scale..scale)))
}

/// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
pub fn random_spd(r: &mut impl Rng, d: usize, lo: f64, hi: f64) -> Matrix {
    let a = Matrix::from_fn(d, d, |_, _| r.random_range(-1.0..1.0));
    let q = a.qr().q();
    let diag = Matrix::from_diagonal(&Vector::from_iterator(d, (0..d).map(|_| r.random_range(lo..hi))));
    let m = &q * diag * q.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn random_prob(r: &mut impl Rng, d: usize) -> Vector {
    let x = Vector::from_iterator(d, (0..d).map(|_| r.random_range(0.05..1.0)));
    let s = x.sum();
    x / s
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
}
