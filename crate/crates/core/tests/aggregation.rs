mod common;

use common::*;
use detector_forge::aggregation::{
    calibrate_progression, individual_inference, purify, voronoi_geometry, AggregationProblem, Aggregator,
    SubGaussianFastPath,
};
use detector_forge::linalg::{Matrix, Vector};
use detector_forge::simulate::{mc_aggregation, Sampler};
use detector_forge::{ConvexSet, Error, RegularData};
use proptest::prelude::*;
use rand::Rng;

/// `G` picking the mean block out of `[θ; vec Θ]`.
fn mean_map(d: usize) -> Matrix {
    let mut g = Matrix::zeros(d, d + d * d);
    g.view_mut((0, 0), (d, d)).copy_from(&eye(d));
    g
}

fn box_family(half: f64, d: usize) -> RegularData {
    gaussian_box(&Vector::from_element(d, -half), &Vector::from_element(d, half), &eye(d))
}

#[test]
fn voronoi_examples() {
    let g = voronoi_geometry(&[v(&[0.0, 0.0]), v(&[2.0, 0.0])]).unwrap();
    assert_eq!(g.u[0][1], v(&[1.0, 0.0]));
    assert_close(g.v[(0, 1)], 1.0, 1e-15, "v₁₂");
    assert_eq!(g.u[1][0], v(&[-1.0, 0.0]));
    assert_close(g.v[(1, 0)], -1.0, 1e-15, "v₂₁");
    let g = voronoi_geometry(&[v(&[0.0]), v(&[1.0]), v(&[3.0])]).unwrap();
    assert_close(g.v[(0, 1)], 0.5, 1e-15, "boundary 0|1");
    assert_close(g.v[(1, 2)], 2.0, 1e-15, "boundary 1|3");
    assert!(matches!(voronoi_geometry(&[v(&[1.0]), v(&[1.0])]), Err(Error::InvalidArgument(_))));
}

#[test]
fn purification_drops_unreachable_cells() {
    let data = gaussian_singleton(&v(&[0.0]), &eye(1));
    let p = AggregationProblem::new(vec![data.clone()], mean_map(1), vec![v(&[-1.0]), v(&[1.0]), v(&[5.0])], 1, 0.1).unwrap();
    let (sub, kept) = purify(&p).unwrap();
    assert_eq!(kept, vec![0, 1]);
    assert_eq!(sub.len(), 2);
    let p = AggregationProblem::new(vec![data], mean_map(1), vec![v(&[1.0]), v(&[5.0])], 1, 0.1).unwrap();
    assert!(matches!(purify(&p), Err(Error::DegenerateInput(_))));
}

#[test]
fn individual_inference_one_dimensional() {
    let p = AggregationProblem::new(vec![box_family(3.0, 1)], mean_map(1), vec![v(&[-1.0]), v(&[1.0])], 4, 0.1).unwrap();
    let proc_ = individual_inference(&p, 0, 0.5).unwrap();
    assert_eq!((proc_.n_red, proc_.n_blue), (1, 1));
    // red [−3, 0], blue [0.5, 3]: closest means 0 and 0.5
    let eps = (-0.125f64 * 0.25).exp();
    assert_close(proc_.risk, eps.powi(4), 1e-6, "risk");
    let mut prev = 0.0;
    for delta in [4.0, 2.0, 1.0, 0.5, 0.25, 0.1] {
        let r = individual_inference(&p, 0, delta).unwrap().risk;
        assert!(r >= prev - 1e-8, "risk not monotone in δ");
        prev = r;
    }
    assert_eq!(individual_inference(&p, 0, 10.0).unwrap().risk, 0.0);
    assert!(individual_inference(&p, 0, 0.0).is_err());
}

#[test]
fn progression_semantics() {
    // risk ≤ budget for δ⁰, δ¹, δ²; exceeds at δ³
    let cal = calibrate_progression(8.0, 0.5, 0.1, 1e-6, |d| Ok(if d >= 2.0 { 0.05 } else { 0.5 })).unwrap();
    assert_eq!(cal.delta, 2.0);
    assert!(cal.within_budget && !cal.hit_floor);
    let cal = calibrate_progression(1.0, 0.5, 0.1, 1e-6, |_| Ok(0.0)).unwrap();
    assert!(cal.hit_floor && cal.delta < 1e-6);
    let cal = calibrate_progression(1.0, 0.5, 0.1, 1e-6, |_| Ok(0.9)).unwrap();
    assert!(!cal.within_budget && cal.delta == 1.0);
    assert!(calibrate_progression(1.0, 1.5, 0.1, 1e-6, |_| Ok(0.0)).is_err());
}

#[test]
fn fast_path_delta_formula() {
    let m = ConvexSet::cuboid(v(&[-5.0, -5.0]), v(&[5.0, 5.0])).unwrap();
    let fp = SubGaussianFastPath::new(&m, &eye(2), &[v(&[0.0, 0.0]), v(&[1.0, 1.0])], 1, 0.05).unwrap();
    for d in &fp.deltas {
        assert_close(*d, 40f64.ln().sqrt(), 1e-12, "√ln 40");
    }
    // ψ at Σω = K·w is ½ln(L−1) = 0 for L = 2: not red
    let w = (v(&[0.0, 0.0]) + v(&[1.0, 1.0]) + &fp.geometry.u[0][1] * fp.deltas[0]) * 0.5;
    assert!(!fp.is_red(0, &[w]));
    assert!(SubGaussianFastPath::new(&m, &eye(2), &[v(&[0.0, 0.0]), v(&[1.0, 1.0])], 100, 0.05).is_err());
    assert!(SubGaussianFastPath::new(&m, &eye(2), &[v(&[0.0, 0.0]), v(&[9.0, 1.0])], 1, 0.05).is_err());
}

fn axis_instance(c: f64) -> (AggregationProblem, ConvexSet, Vec<Vector>) {
    let d = 4;
    let ests: Vec<Vector> = (0..d).map(|i| Vector::from_fn(d, |j, _| if i == j { c } else { 0.0 })).collect();
    let p = AggregationProblem::new(vec![box_family(4.0, d)], mean_map(d), ests.clone(), 20, 0.1).unwrap();
    let m = ConvexSet::cuboid(Vector::from_element(d, -4.0), Vector::from_element(d, 4.0)).unwrap();
    (p, m, ests)
}

#[test]
fn generic_path_matches_fast_path() {
    let (p, m, ests) = axis_instance(1.0);
    let fp = SubGaussianFastPath::new(&m, &eye(4), &ests, p.k, p.eps).unwrap();
    let agg = Aggregator::with_deltas(&p, &fp.deltas).unwrap();
    let mut r = rng(41);
    let mut agree = 0;
    for t in 0..200 {
        let truth = &ests[t % 4] * 0.8 + random_vec(&mut r, 4, 0.5);
        let s = Sampler::gaussian(truth, &eye(4), t as u64).unwrap();
        let obs = s.trajectory(p.k, &mut s.rng(0));
        if agg.select(&obs).unwrap() == fp.select(&obs).unwrap() {
            agree += 1;
        }
    }
    assert_eq!(agree, 200);
}

#[test]
fn aggregation_oracle_inequality() {
    let (p, m, ests) = axis_instance(1.0);
    let agg = Aggregator::build(&p).unwrap();
    assert_eq!(agg.kept, vec![0, 1, 2, 3]);
    for c in agg.calibrations.iter().flatten() {
        assert!(c.within_budget, "calibration over budget: {c:?}");
    }
    let fp = SubGaussianFastPath::new(&m, &eye(4), &ests, p.k, p.eps).unwrap();
    let truth = v(&[0.7, 0.2, -0.3, 0.1]);
    let s = Sampler::gaussian(truth.clone(), &eye(4), 77).unwrap();
    let rep = mc_aggregation(&agg, &truth, &s, 1000).unwrap();
    assert!(rep.pass, "generic violation frequency {}", rep.estimate);
    let rep = mc_aggregation(&fp, &truth, &s, 1000).unwrap();
    assert!(rep.pass, "fast path violation frequency {}", rep.estimate);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reflected_configuration_bound(r in 0.01f64..10.0, frac in -1.0f64..1.0, delta in 0.0f64..5.0, h in -10.0f64..10.0) {
        let d = frac * delta;
        let plus = ((r - d).powi(2) + h * h).sqrt();
        let star = ((r + d).powi(2) + h * h).sqrt();
        prop_assert!(plus - star <= 2.0 * delta + 1e-12);
    }

    #[test]
    fn voronoi_is_antisymmetric(seed in 0u64..1000) {
        let mut r = rng(seed);
        let l = r.random_range(2..6);
        let ests: Vec<Vector> = (0..l).map(|_| random_vec(&mut r, 3, 2.0)).collect();
        let g = voronoi_geometry(&ests).unwrap();
        for a in 0..l {
            for b in 0..l {
                if a != b {
                    prop_assert!((&g.u[a][b] + &g.u[b][a]).norm() < 1e-12);
                    prop_assert!((g.u[a][b].norm() - 1.0).abs() < 1e-12);
                    prop_assert!((g.v[(a, b)] + g.v[(b, a)]).abs() < 1e-12);
                }
            }
        }
    }
}
