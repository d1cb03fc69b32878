mod common;

use std::sync::Arc;

use common::*;
use detector_forge::families::{gaussian_param_set, sub_gaussian_family, FamilyKind};
use detector_forge::linalg::{self, vec_of, Matrix, Vector};
use detector_forge::quadlift::{
    compute_delta, lift_bounded_support, lift_gaussian, lift_subgaussian_cover, lifted_phi, solve_quad_detector,
    solve_quad_detector_mode, special_case_affine, LiftFrame, LiftMode, MatrixSupport, QuadLiftSpec,
};
use detector_forge::saddle::{solve_saddle, SaddleProblem, SolverOptions};
use detector_forge::simulate::{mc_log_mgf, Sampler};
use detector_forge::{ConvexSet, Error};
use proptest::prelude::*;
use rand::Rng;

/// `d = 8`, `m = 12`: `A = s[I₈ | C | 0]` with a sparse nonnegative `C`.
fn table_matrix(s: f64) -> Matrix {
    Matrix::from_fn(8, 13, |i, j| {
        if j < 8 {
            if i == j { s } else { 0.0 }
        } else if j < 12 && (i + j) % 3 == 0 {
            0.25 * s
        } else {
            0.0
        }
    })
}

fn table_spec(rho: f64, sigma: f64, sign: f64) -> QuadLiftSpec {
    let a = table_matrix(0.1) * sign;
    let u = ConvexSet::cuboid(Vector::from_element(12, rho), Vector::from_element(12, rho + 10.0)).unwrap();
    let cov = eye(8) * (sigma * sigma);
    QuadLiftSpec::new(a, u, ConvexSet::singleton(vec_of(&cov)), cov).unwrap()
}

fn cov_spec(a: Matrix, u: ConvexSet, cov: &Matrix) -> QuadLiftSpec {
    QuadLiftSpec::new(a, u, ConvexSet::singleton(vec_of(cov)), cov.clone()).unwrap()
}

#[test]
fn table_row_three_analog() {
    let (s1, s2) = (table_spec(0.01, 1.0, 1.0), table_spec(0.01, 4.0, -1.0));
    let o = SolverOptions::default();
    let affine = solve_quad_detector_mode(&s1, &s2, LiftMode::AffineOnly, &o).unwrap();
    let full = solve_quad_detector(&s1, &s2, &o).unwrap();
    assert!(affine.risk >= 0.99, "affine risk {}", affine.risk);
    assert!(full.risk <= 0.9, "quadratic risk {}", full.risk);
    let frame = LiftFrame::for_pair(&s1, &s2, LiftMode::Full).unwrap();
    assert!(full.in_band(frame.theta_ref(), frame.gamma(), 1e-9));
}

#[test]
fn table_row_one_analog() {
    let (s1, s2) = (table_spec(0.5, 2.0, 1.0), table_spec(0.5, 2.0, -1.0));
    let o = SolverOptions::default();
    let affine = solve_quad_detector_mode(&s1, &s2, LiftMode::AffineOnly, &o).unwrap();
    let full = solve_quad_detector_mode(&s1, &s2, LiftMode::Full, &o).unwrap();
    let quad = solve_quad_detector_mode(&s1, &s2, LiftMode::QuadraticOnly, &o).unwrap();
    assert!((full.risk - affine.risk).abs() <= 1e-3, "{} vs {}", full.risk, affine.risk);
    assert!(quad.risk >= 0.99, "h = 0 risk {}", quad.risk);
}

/// Sub-Gaussian saddle value for `ζ ~ N(u + c, Θ)`, `u ∈ box`.
fn plain_affine_risk(lo: &Vector, hi: &Vector, shift: &Vector, cov: &Matrix, lo2: &Vector, hi2: &Vector, shift2: &Vector, cov2: &Matrix) -> f64 {
    let mk = |lo: &Vector, hi: &Vector, c: &Vector, cov: &Matrix| {
        let m = ConvexSet::cuboid(lo + c, hi + c).unwrap();
        sub_gaussian_family(gaussian_param_set(m, ConvexSet::singleton(vec_of(cov))).unwrap()).unwrap()
    };
    let p = SaddleProblem::new(mk(lo, hi, shift, cov), mk(lo2, hi2, shift2, cov2)).unwrap();
    solve_saddle(&p).unwrap().risk()
}

fn shift_matrix(d: usize, c: &Vector) -> Matrix {
    let mut a = Matrix::zeros(d, d + 1);
    a.view_mut((0, 0), (d, d)).copy_from(&eye(d));
    a.column_mut(d).copy_from(c);
    a
}

#[test]
fn quadratic_never_loses_to_affine() {
    let mut r = rng(21);
    let o = SolverOptions::default();
    for _ in 0..4 {
        let d = r.random_range(2..=3);
        let mut sides = Vec::new();
        for _ in 0..2 {
            let lo = random_vec(&mut r, d, 1.0);
            let hi = &lo + Vector::from_iterator(d, (0..d).map(|_| r.random_range(0.1..1.0)));
            let c = random_vec(&mut r, d, 1.5);
            let cov = random_spd(&mut r, d, 0.5, 2.0);
            sides.push((lo, hi, c, cov));
        }
        let (l1, h1, c1, t1) = &sides[0];
        let (l2, h2, c2, t2) = &sides[1];
        let plain = plain_affine_risk(l1, h1, c1, t1, l2, h2, c2, t2);
        let s1 = cov_spec(shift_matrix(d, c1), ConvexSet::cuboid(l1.clone(), h1.clone()).unwrap(), t1);
        let s2 = cov_spec(shift_matrix(d, c2), ConvexSet::cuboid(l2.clone(), h2.clone()).unwrap(), t2);
        let reduced = special_case_affine(&s1, &s2, &o).unwrap();
        let lifted_affine = solve_quad_detector_mode(&s1, &s2, LiftMode::AffineOnly, &o).unwrap();
        let quad = solve_quad_detector(&s1, &s2, &o).unwrap();
        assert_close(reduced.risk, plain, 1e-5, "reduction vs plain");
        assert_close(lifted_affine.risk, plain, 1e-5, "H = 0 vs plain");
        assert!(quad.risk <= plain + 1e-5, "quadratic {} above affine {plain}", quad.risk);
    }
}

#[test]
fn identical_specs_give_trivial_detector() {
    let cov = eye(2);
    let u = ConvexSet::cuboid(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
    let s = cov_spec(shift_matrix(2, &v(&[0.0, 0.0])), u, &cov);
    let det = solve_quad_detector(&s, &s, &SolverOptions::default()).unwrap();
    assert_close(det.risk, 1.0, 1e-6, "risk");
    assert!(det.h.norm() < 1e-3 && det.hmat.norm() < 1e-3);
}

#[test]
fn delta_examples() {
    let t = eye(3) * 4.0;
    assert_close(compute_delta(&ConvexSet::singleton(vec_of(&t)), &t).unwrap(), 0.0, 1e-12, "Θ = Θ*");
    let sigma = eye(3) * 2.25;
    assert_close(compute_delta(&ConvexSet::singleton(vec_of(&sigma)), &t).unwrap(), 0.25, 1e-12, "σ/σ* − 1");
    let interval = ConvexSet::psd_interval(&t * 0.25, t.clone()).unwrap();
    assert_close(compute_delta(&interval, &t).unwrap(), 0.5, 1e-12, "1 − √a");
    let skew = Matrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let interval = ConvexSet::psd_interval(&skew * 0.25, skew.clone()).unwrap();
    assert_close(compute_delta(&interval, &skew).unwrap(), 2.0, 0.0, "non-scalar Θ*");
    let ball = ConvexSet::ball(vec_of(&(&t * 0.5)), 0.1).unwrap();
    assert_close(compute_delta(&ball, &t).unwrap(), 2.0, 0.0, "general");
}

#[test]
fn spec_validation() {
    let u = ConvexSet::cuboid(v(&[0.0]), v(&[1.0])).unwrap();
    let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    let big = ConvexSet::singleton(vec_of(&(eye(2) * 2.0)));
    assert!(matches!(QuadLiftSpec::new(a.clone(), u.clone(), big, eye(2)), Err(Error::InvalidParameter(_))));
    assert!(QuadLiftSpec::new(Matrix::zeros(2, 3), u.clone(), ConvexSet::singleton(vec_of(&eye(2))), eye(2)).is_err());
    let s = QuadLiftSpec::new(a, u, ConvexSet::singleton(vec_of(&eye(2))), eye(2)).unwrap();
    assert!(s.clone().with_gamma(1.0).is_err());
    assert_eq!(s.frobenius_coef(), 0.0);
    let s = s.with_delta(0.5).unwrap().with_gamma(0.5).unwrap();
    assert_close(s.frobenius_coef(), 0.5 * 2.5 / 1.0, 1e-15, "δ(2+δ)/(2(1−γ))");
}

fn small_spec() -> QuadLiftSpec {
    let a = Matrix::from_row_slice(2, 3, &[1.0, 0.5, 0.2, -0.3, 1.0, 0.0]);
    let u = ConvexSet::cuboid(v(&[-1.0, 0.0]), v(&[1.0, 0.5])).unwrap();
    let t = Matrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 1.0]);
    let ucov = ConvexSet::psd_interval(&t * 0.5, t.clone()).unwrap();
    QuadLiftSpec::new(a, u, ucov, t).unwrap()
}

#[test]
fn lifted_phi_vanishes_at_origin() {
    let s = small_spec();
    let data = lift_gaussian(&s).unwrap();
    assert_eq!(data.kind(), FamilyKind::LiftedGaussian);
    let mut r = rng(8);
    for _ in 0..10 {
        let mu = data.m_set().sample(&mut r);
        assert!(data.phi(&Vector::zeros(6), &mu).unwrap().abs() < 1e-10);
    }
}

#[test]
fn lifted_phi_without_quadratic_part_is_gaussian_bound() {
    let s = small_spec();
    let theta = s.theta_star.clone();
    let mut r = rng(9);
    for _ in 0..20 {
        let h = random_vec(&mut r, 2, 2.0);
        let got = lifted_phi(&s, &h, &Matrix::zeros(2, 2), &theta).unwrap();
        let lin = s.a.columns(0, 2).transpose() * &h;
        let expect = s.u.support_value(&lin).unwrap() + h.dot(&s.a.column(2)) + 0.5 * h.dot(&(&theta * &h));
        assert_close(got, expect, 1e-7 * expect.abs().max(1.0), "H = 0");
    }
    let outside = linalg::inv_sqrtm_pd(&theta).unwrap();
    assert!(matches!(lifted_phi(&s, &v(&[0.0, 0.0]), &(&outside * &outside), &theta), Err(Error::Domain(_))));
}

#[test]
fn lifted_mgf_bound_holds_on_grid() {
    let scalar = {
        let t = eye(2) * 1.2;
        let ucov = ConvexSet::psd_interval(&t * 0.5, t.clone()).unwrap();
        QuadLiftSpec::new(small_spec().a, small_spec().u, ucov, t).unwrap()
    };
    assert!(scalar.delta < 0.3);
    for s in [small_spec(), scalar] {
        check_mgf_grid(&s);
    }
}

fn check_mgf_grid(s: &QuadLiftSpec) {
    let theta_inv = linalg::inv_sqrtm_pd(&s.theta_star).unwrap();
    let theta_inv = &theta_inv * &theta_inv;
    let mut r = rng(10);
    let covs = [s.theta_star.clone(), &s.theta_star * 0.6];
    for (k, gamma) in [-0.45, -0.1, 0.0, 0.1, 0.2].into_iter().enumerate() {
        for h in [v(&[0.0, 0.0]), v(&[0.3, -0.2]), v(&[-0.5, 0.4])] {
            let hmat = &theta_inv * gamma;
            let u = s.u.sample(&mut r);
            for cov in &covs {
                let bound = lifted_phi(s, &h, &hmat, cov).unwrap();
                let sampler = Sampler::gaussian(s.mean(&u), cov, 100 + k as u64).unwrap();
                let rep = mc_log_mgf(&sampler, &h, &hmat, Some(bound), 100_000).unwrap();
                assert!(rep.pass, "γ={gamma} h={h:?}: {} > {bound} + 3·{}", rep.estimate, rep.std_error);
            }
        }
    }
}

#[test]
fn band_projection_clips_eigenvalues() {
    let t = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let frame = LiftFrame::new(&t, 0.5, LiftMode::Full).unwrap();
    let x = frame.encode(&v(&[1.0, 2.0]), &(eye(2) * 10.0));
    let p = frame.set().project(&x);
    let (h, hmat) = frame.decode(&p);
    assert_close((h - v(&[1.0, 2.0])).norm(), 0.0, 1e-12, "h untouched");
    let r = linalg::sqrtm_psd(&t);
    for l in linalg::eigh(&(&r * hmat * &r)).eigenvalues.iter() {
        assert!(l.abs() <= 0.5 + 1e-12);
    }
    let aff = LiftFrame::new(&t, 0.5, LiftMode::AffineOnly).unwrap();
    let (_, z) = aff.decode(&aff.set().project(&x));
    assert_eq!(z.norm(), 0.0);
    let quad = LiftFrame::new(&t, 0.5, LiftMode::QuadraticOnly).unwrap();
    let (h0, _) = quad.decode(&quad.set().project(&x));
    assert_eq!(h0.norm(), 0.0);
    let zeta = v(&[0.7, -1.2]);
    let hm = Matrix::from_row_slice(2, 2, &[0.1, 0.05, 0.05, -0.2]);
    let hv = v(&[0.3, 0.4]);
    assert_close(
        frame.encode(&hv, &hm).dot(&frame.lift_observation(&zeta)),
        hv.dot(&zeta) + 0.5 * zeta.dot(&(&hm * &zeta)),
        1e-12,
        "lifted pairing",
    );
}

/// `X⁺ = {[[a, b], [b, 1]] : b² ≤ a ≤ 1}`, the lift of `ζ ∈ [−1, 1]`.
#[derive(Debug)]
struct IntervalLift;

impl MatrixSupport for IntervalLift {
    fn size(&self) -> usize {
        2
    }
    fn support(&self, w: &Matrix) -> detector_forge::Result<(f64, Matrix)> {
        let (w11, w12, w22) = (w[(0, 0)], 0.5 * (w[(0, 1)] + w[(1, 0)]), w[(1, 1)]);
        let a = if w11 >= 0.0 { 1.0 } else { (w12.abs() / -w11).powi(2).min(1.0) };
        let b = a.sqrt() * if w12 >= 0.0 { 1.0 } else { -1.0 };
        let z = Matrix::from_row_slice(2, 2, &[a, b, b, 1.0]);
        Ok((w11 * a + 2.0 * w12 * b + w22, z))
    }
}

#[test]
fn lifted_bounded_support_family() {
    let q = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert!(matches!(lift_bounded_support(None, &[q.clone()], 1.0), Err(Error::Capability(_))));
    let data = lift_bounded_support(Some(Arc::new(IntervalLift)), &[q], 1.0).unwrap();
    assert_eq!(data.kind(), FamilyKind::LiftedBoundedSupport);
    let mu = vec_of(&Matrix::from_row_slice(2, 2, &[0.5, 0.2, 0.2, 1.0]));
    assert!(data.phi(&Vector::zeros(4), &mu).unwrap().abs() < 1e-9);
    let mut r = rng(12);
    for _ in 0..20 {
        let a = random_vec(&mut r, 4, 2.0);
        let b = random_vec(&mut r, 4, 2.0);
        let mid = (&a + &b) * 0.5;
        let lhs = data.phi(&mid, &mu).unwrap();
        let rhs = 0.5 * (data.phi(&a, &mu).unwrap() + data.phi(&b, &mu).unwrap());
        assert!(lhs <= rhs + 1e-6, "midpoint convexity {lhs} > {rhs}");
    }
}

#[test]
fn subgaussian_cover_uses_doubled_identity() {
    let data = lift_subgaussian_cover(ConvexSet::ball(Vector::zeros(2), 1.0).unwrap()).unwrap();
    let mu = detector_forge::families::sub_gaussian_params(&v(&[0.5, 0.0]), &(eye(2) * 2.0));
    assert_close(data.phi(&v(&[1.0, 1.0]), &mu).unwrap(), 0.5 + 2.0, 1e-12, "hᵀμ + hᵀh");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lifted_phi_is_convex_concave(seed in 0u64..10_000, t in 0.0f64..1.0) {
        let s = small_spec();
        let data = lift_gaussian(&s).unwrap();
        let frame = LiftFrame::new(&s.theta_star, s.gamma, LiftMode::Full).unwrap();
        let mut r = rng(seed);
        let pick = |r: &mut rand_chacha::ChaCha8Rng| frame.set().project(&random_vec(r, 6, 1.0));
        let (x1, x2) = (pick(&mut r), pick(&mut r));
        let mu = data.m_set().sample(&mut r);
        let xm = &x1 * t + &x2 * (1.0 - t);
        let f = |x: &Vector, m: &Vector| data.phi(x, m).unwrap();
        prop_assert!(f(&xm, &mu) <= t * f(&x1, &mu) + (1.0 - t) * f(&x2, &mu) + 1e-9);
        let (m1, m2) = (data.m_set().sample(&mut r), data.m_set().sample(&mut r));
        let mm = &m1 * t + &m2 * (1.0 - t);
        prop_assert!(f(&x1, &mm) >= t * f(&x1, &m1) + (1.0 - t) * f(&x1, &m2) - 1e-9);
    }

    #[test]
    fn lifted_gradients_match_finite_differences(seed in 0u64..10_000) {
        let s = small_spec();
        let data = lift_gaussian(&s).unwrap();
        let frame = LiftFrame::new(&s.theta_star, s.gamma, LiftMode::Full).unwrap();
        let mut r = rng(seed);
        let x = frame.set().project(&random_vec(&mut r, 6, 0.5));
        let x = &x * 0.9;
        let mu = data.m_set().sample(&mut r);
        let e = data.eval(&x, &mu).unwrap();
        for i in 0..2 {
            let step = 1e-6;
            let mut xp = x.clone();
            xp[i] += step;
            let mut xm = x.clone();
            xm[i] -= step;
            let fd = (data.phi(&xp, &mu).unwrap() - data.phi(&xm, &mu).unwrap()) / (2.0 * step);
            prop_assert!((fd - e.grad_h[i]).abs() < 1e-4 * (1.0 + fd.abs()), "∂h{i}: {fd} vs {}", e.grad_h[i]);
        }
    }
}
