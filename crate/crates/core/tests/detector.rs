mod common;

use common::*;
use detector_forge::detector::{
    apply_repeated, build_detector, erf_risk, erf_upper, gaussian_symmetric_detector, k_to_match_ideal, risk_after_k,
    run_test, AffineDetector, GaussianPairSpec, Hypothesis, TestVerdict,
};
use detector_forge::linalg::vec_of;
use detector_forge::saddle::{solve_saddle, SaddleProblem, SolverOptions};
use detector_forge::{ConvexSet, Error};
use proptest::prelude::*;

#[test]
fn unit_shift_detector() {
    let p = SaddleProblem::new(gaussian_singleton(&v(&[2.0, 0.0]), &eye(2)), gaussian_singleton(&v(&[0.0, 0.0]), &eye(2))).unwrap();
    let s = solve_saddle(&p).unwrap();
    let det = build_detector(&s, &p, false).unwrap();
    assert_close(det.h[0], 1.0, 1e-5, "h_1");
    assert_close(det.h[1], 0.0, 1e-5, "h_2");
    assert_close(det.a, -1.0, 1e-5, "a");
    assert_close(det.risk, (-0.5f64).exp(), 1e-6, "risk");
    assert!(det.certified);
}

#[test]
fn zero_statistic_accepts_first_hypothesis() {
    let det = AffineDetector::zero(2);
    let verdict = run_test(&det, &[v(&[1.0, 2.0]), v(&[3.0, -4.0])]).unwrap();
    assert_eq!(verdict.accepted, Hypothesis::H1);
    assert_eq!(TestVerdict::from_statistic(-1e-300).accepted, Hypothesis::H2);
}

#[test]
fn repeated_statistic_is_sum() {
    let det = AffineDetector { h: v(&[1.0, -1.0]), a: 0.5, risk: 0.5, gap: 0.0, certified: true };
    let obs = [v(&[1.0, 0.0]), v(&[0.0, 2.0]), v(&[0.5, 0.5])];
    assert_close(apply_repeated(&det, &obs).unwrap(), 1.5 - 1.5 + 0.5, 1e-15, "sum");
    assert!(matches!(apply_repeated(&det, &[v(&[1.0])]), Err(Error::DimensionMismatch { .. })));
    assert_eq!(det.negated().eval(&v(&[1.0, 0.0])), -1.5);
}

#[test]
fn risk_after_k_examples() {
    assert_close(risk_after_k(0.5, 3).unwrap(), 0.125, 1e-15, "0.5^3");
    assert!(risk_after_k(0.0, 1).is_err());
    assert!(risk_after_k(1.5, 1).is_err());
    assert!(risk_after_k(0.5, 0).is_err());
}

#[test]
fn k_to_match_ideal_examples() {
    assert_close(k_to_match_ideal(0.01).unwrap(), 2.852, 1e-3, "δ = 0.01");
    assert!(k_to_match_ideal(0.5).is_err());
    assert!(k_to_match_ideal(0.0).is_err());
    let mut prev = f64::INFINITY;
    for i in 1..10 {
        let r = k_to_match_ideal(10f64.powi(-i)).unwrap();
        assert!(r < prev && r > 2.0);
        prev = r;
    }
}

#[test]
fn erf_is_the_upper_tail() {
    assert_close(erf_upper(1.0), 0.158655253931457, 1e-12, "Erf(1)");
    assert_close(erf_upper(0.0), 0.5, 1e-15, "Erf(0)");
    assert_close(erf_upper(-1.0), 1.0 - 0.158655253931457, 1e-12, "Erf(−1)");
    let (a, b) = erf_risk(2.0, 0.0, 0.0).unwrap();
    assert_close(a, erf_upper(2.0), 1e-15, "α = 0");
    assert_eq!(a, b);
    assert!(erf_risk(1.0, 2.0, 0.0).is_err());
}

#[test]
fn gaussian_symmetric_closed_form_and_solver_agree() {
    let cov = v(&[2.0, 0.5, 0.5, 1.0]);
    let theta = detector_forge::linalg::mat_of(cov.as_slice(), 2);
    let spec = GaussianPairSpec::new(
        ConvexSet::singleton(v(&[1.0, 0.5])),
        ConvexSet::singleton(v(&[-1.0, 0.0])),
        ConvexSet::singleton(cov),
        theta.clone(),
    )
    .unwrap();
    let (det, delta) = gaussian_symmetric_detector(&spec, &SolverOptions::default()).unwrap();
    assert_close(det.risk, (-0.5 * delta * delta).exp(), 1e-12, "risk = exp(−δ²/2)");
    // same pair through the general solver: boxes that collapse to points are not singletons
    let spec2 = GaussianPairSpec::new(
        ConvexSet::cuboid(v(&[1.0, 0.5]), v(&[1.0, 0.5])).unwrap(),
        ConvexSet::cuboid(v(&[-1.0, 0.0]), v(&[-1.0, 0.0])).unwrap(),
        ConvexSet::singleton(vec_of(&theta)),
        theta,
    )
    .unwrap();
    let (det2, delta2) = gaussian_symmetric_detector(&spec2, &SolverOptions::default()).unwrap();
    assert_close(det2.risk, det.risk, 1e-6, "risk");
    assert_close(delta2, delta, 1e-4, "δ");
}

#[test]
fn uncertified_solutions_need_force() {
    let p = SaddleProblem::new(gaussian_singleton(&v(&[1.0]), &eye(1)), gaussian_singleton(&v(&[-1.0]), &eye(1))).unwrap();
    let mut s = solve_saddle(&p).unwrap();
    s.gap = 1.0;
    assert!(matches!(build_detector(&s, &p, false), Err(Error::Uncertified { .. })));
    let det = build_detector(&s, &p, true).unwrap();
    assert!(!det.certified);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn risk_decreases_geometrically(eps in 0.01f64..1.0, k in 1usize..20) {
        let r = risk_after_k(eps, k).unwrap();
        let r1 = risk_after_k(eps, k + 1).unwrap();
        prop_assert!(r1 <= r + 1e-15);
        prop_assert!((r1 - r * eps).abs() <= 1e-14);
    }

    #[test]
    fn negation_swaps_sides(h in proptest::collection::vec(-3.0f64..3.0, 3), a in -2.0f64..2.0, w in proptest::collection::vec(-3.0f64..3.0, 3)) {
        let det = AffineDetector { h: v(&h), a, risk: 0.5, gap: 0.0, certified: true };
        prop_assert!((det.eval(&v(&w)) + det.negated().eval(&v(&w))).abs() < 1e-12);
    }
}
