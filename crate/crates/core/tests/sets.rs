mod common;

use common::*;
use detector_forge::linalg::{self, vec_of, Matrix, Vector};
use detector_forge::sets::HalfSpace;
use detector_forge::ConvexSet;
use proptest::prelude::*;

fn shapes() -> Vec<(&'static str, ConvexSet)> {
    let lo = Matrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.5]);
    vec![
        ("cuboid", ConvexSet::cuboid(v(&[-1.0, 0.0, 2.0]), v(&[1.0, 0.5, 3.0])).unwrap()),
        ("ball", ConvexSet::ball(v(&[1.0, -1.0, 0.0]), 2.0).unwrap()),
        ("simplex", ConvexSet::simplex(3)),
        ("bounded simplex", ConvexSet::bounded_simplex(v(&[0.1, 0.0, 0.2]), v(&[0.5, 0.6, 0.9])).unwrap()),
        ("truncated simplex", ConvexSet::truncated_simplex(3, 0.05).unwrap()),
        ("singleton", ConvexSet::singleton(v(&[0.3, 0.2, 0.1]))),
        ("halfspace", ConvexSet::halfspace(HalfSpace::new(v(&[1.0, 2.0, -1.0]), 0.5))),
        ("hyperplane", ConvexSet::hyperplane(v(&[1.0, 1.0, 1.0]), 1.0).unwrap()),
        ("psd interval", ConvexSet::psd_interval(lo, eye(2) * 2.0).unwrap()),
        ("psd cone", ConvexSet::psd_cone(2)),
        (
            "product",
            ConvexSet::product(vec![ConvexSet::ball(v(&[0.0]), 1.0).unwrap(), ConvexSet::simplex(2)]).unwrap(),
        ),
        (
            "cut cuboid",
            ConvexSet::with_halfspaces(
                ConvexSet::cuboid(v(&[-1.0, -1.0, -1.0]), v(&[1.0, 1.0, 1.0])).unwrap(),
                vec![HalfSpace::new(v(&[1.0, 1.0, 0.0]), 0.5)],
            )
            .unwrap(),
        ),
        ("scaled ball", ConvexSet::scaled(ConvexSet::ball(Vector::zeros(3), 1.0).unwrap(), 2.5).unwrap()),
    ]
}

#[test]
fn constructors_validate_input() {
    assert!(ConvexSet::cuboid(v(&[1.0]), v(&[0.0])).is_err());
    assert!(ConvexSet::ball(v(&[0.0]), -1.0).is_err());
    assert!(ConvexSet::truncated_simplex(3, 0.5).is_err());
    assert!(ConvexSet::bounded_simplex(v(&[0.6, 0.6]), v(&[1.0, 1.0])).is_err());
    assert!(ConvexSet::psd_interval(eye(2) * 2.0, eye(2)).is_err());
    assert!(ConvexSet::product(vec![]).is_err());
}

#[test]
fn support_examples() {
    let b = ConvexSet::cuboid(v(&[-1.0, -2.0]), v(&[1.0, 2.0])).unwrap();
    let (s, x) = b.support(&v(&[1.0, -1.0])).unwrap();
    assert_close(s, 3.0, 1e-15, "box support");
    assert_eq!(x, v(&[1.0, -2.0]));
    let s = ConvexSet::simplex(3).support_value(&v(&[0.2, 0.9, -1.0])).unwrap();
    assert_close(s, 0.9, 1e-15, "simplex support");
    let s = ConvexSet::ball(v(&[1.0, 0.0]), 2.0).unwrap().support_value(&v(&[3.0, 4.0])).unwrap();
    assert_close(s, 3.0 + 10.0, 1e-12, "ball support");
    assert!(ConvexSet::full(2).support(&v(&[1.0, 0.0])).is_none());
    assert_eq!(ConvexSet::full(2).support_value(&v(&[0.0, 0.0])), Some(0.0));
    let p = ConvexSet::psd_interval(eye(2) * 0.5, eye(2)).unwrap();
    let w = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert_close(p.support_value(&vec_of(&w)).unwrap(), 0.5, 1e-9, "psd interval support");
}

#[test]
fn psd_projection_clips_spectrum() {
    let cone = ConvexSet::psd_cone(2);
    let x = vec_of(&Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
    let p = linalg::mat_of(cone.project(&x).as_slice(), 2);
    assert!(linalg::is_psd(&p, 1e-12));
    assert_close(linalg::max_eigenvalue(&p), 3.0, 1e-12, "kept eigenvalue");
    assert_close(linalg::min_eigenvalue(&p), 0.0, 1e-12, "clipped eigenvalue");
}

#[test]
fn bounded_sets_report_radius() {
    for (name, s) in shapes() {
        let bounded = !matches!(name, "halfspace" | "hyperplane" | "psd cone");
        assert_eq!(s.bound_radius().is_some(), bounded, "{name}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_properties(seed in 0u64..100_000) {
        let mut r = rng(seed);
        for (name, s) in shapes() {
            let n = s.dim();
            let x = random_vec(&mut r, n, 4.0);
            let y = random_vec(&mut r, n, 4.0);
            let px = s.project(&x);
            let py = s.project(&y);
            prop_assert!(s.contains(&px, 1e-6), "{name}: projection outside");
            prop_assert!((s.project(&px) - &px).norm() < 1e-6, "{name}: not idempotent");
            prop_assert!((&px - &py).norm() <= (&x - &y).norm() + 1e-6, "{name}: expansive");
            let z = s.sample(&mut r);
            prop_assert!(s.contains(&z, 1e-6), "{name}: sample outside");
            prop_assert!((&x - &px).dot(&(&z - &px)) <= 1e-6 * (1.0 + x.norm() * z.norm()), "{name}: obtuse angle");
        }
    }

    #[test]
    fn support_dominates_members(seed in 0u64..100_000) {
        let mut r = rng(seed);
        for (name, s) in shapes() {
            let n = s.dim();
            let g = random_vec(&mut r, n, 2.0);
            if let Some((val, arg)) = s.support(&g) {
                prop_assert!(s.contains(&arg, 1e-6), "{name}: maximiser outside");
                prop_assert!((g.dot(&arg) - val).abs() <= 1e-6 * (1.0 + val.abs()), "{name}: value mismatch");
                for _ in 0..5 {
                    let z = s.sample(&mut r);
                    prop_assert!(g.dot(&z) <= val + 1e-6 * (1.0 + val.abs()), "{name}: member above support");
                }
            }
        }
    }
}
