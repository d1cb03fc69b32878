mod common;

use common::*;
use detector_forge::families::{discrete_family, poisson_family};
use detector_forge::saddle::{best_response, solve_saddle, solve_saddle_from, SaddleProblem};
use detector_forge::ConvexSet;
use rand::Rng;

#[test]
fn identical_hypotheses_have_zero_saddle_value() {
    let g = gaussian_box(&v(&[-1.0, 0.0]), &v(&[1.0, 0.5]), &eye(2));
    let p = SaddleProblem::new(g.clone(), g).unwrap();
    let s = solve_saddle(&p).unwrap();
    assert!(s.h_star.norm() < 1e-4, "h* = {}", s.h_star);
    assert_close(s.sad_val, 0.0, 1e-6, "sad_val");
    assert_close(s.risk(), 1.0, 1e-6, "risk");

    let m = ConvexSet::cuboid(v(&[0.5, 1.0]), v(&[2.0, 3.0])).unwrap();
    let p = poisson_family(m).unwrap();
    let s = solve_saddle(&SaddleProblem::new(p.clone(), p).unwrap()).unwrap();
    assert_close(s.sad_val, 0.0, 1e-6, "poisson sad_val");

    let d = discrete_family(ConvexSet::singleton(v(&[0.3, 0.7]))).unwrap();
    let s = solve_saddle(&SaddleProblem::new(d.clone(), d).unwrap()).unwrap();
    assert_close(s.sad_val, 0.0, 1e-6, "discrete sad_val");
}

#[test]
fn gaussian_singletons_match_closed_form() {
    let p = SaddleProblem::new(gaussian_singleton(&v(&[2.0, 0.0]), &eye(2)), gaussian_singleton(&v(&[0.0, 0.0]), &eye(2))).unwrap();
    let s = solve_saddle(&p).unwrap();
    assert_close(s.h_star[0], 1.0, 1e-5, "h*_1");
    assert_close(s.h_star[1], 0.0, 1e-5, "h*_2");
    assert_close(s.sad_val, -0.5, 1e-6, "sad_val");
    assert_close(s.risk(), (-0.5f64).exp(), 1e-6, "risk");
    assert!(s.gap >= 0.0);
}

#[test]
fn discrete_singletons_give_hellinger_affinity() {
    let p = SaddleProblem::new(discrete_singleton(&v(&[0.8, 0.2])), discrete_singleton(&v(&[0.2, 0.8]))).unwrap();
    let s = solve_saddle(&p).unwrap();
    assert_close(s.risk(), 0.8, 1e-6, "risk");
    // brute-force grid over h ∈ [−5, 5]²
    let mut best = f64::INFINITY;
    for i in 0..=200 {
        for j in 0..=200 {
            let h = v(&[-5.0 + 0.05 * i as f64, -5.0 + 0.05 * j as f64]);
            let val = p.psi(&h, &v(&[0.8, 0.2]), &v(&[0.2, 0.8])).unwrap().value;
            best = best.min(val);
        }
    }
    assert!(best >= s.sad_val - 1e-6, "grid {best} below solver {}", s.sad_val);
    assert_close(best, 0.8f64.ln(), 1e-3, "grid optimum");
}

#[test]
fn best_response_examples() {
    let p = SaddleProblem::new(gaussian_singleton(&v(&[1.0]), &eye(1)), gaussian_singleton(&v(&[-1.0]), &eye(1))).unwrap();
    let h = v(&[0.3]);
    let br = best_response(&h, &p).unwrap();
    assert_eq!(br.mu1, p.data1.m_set().as_singleton().unwrap().clone());
    assert_close(br.value, p.psi(&h, &br.mu1, &br.mu2).unwrap().value, 1e-15, "singleton value");

    let b = gaussian_box(&v(&[-1.0, -2.0]), &v(&[1.0, 2.0]), &eye(2));
    let p = SaddleProblem::new(b.clone(), b).unwrap();
    let h = v(&[0.5, -0.25]);
    let br = best_response(&h, &p).unwrap();
    // Φ₁(−h; θ) is maximised at θ = sign(−h) vertex
    assert_close(br.mu1[0], -1.0, 1e-8, "vertex 1");
    assert_close(br.mu1[1], 2.0, 1e-8, "vertex 2");

    let d = discrete_family(ConvexSet::simplex(3)).unwrap();
    let p = SaddleProblem::new(d.clone(), d).unwrap();
    let br = best_response(&v(&[0.0, 0.0, 0.0]), &p).unwrap();
    assert_close(br.value, 0.0, 1e-14, "h=0 value");
}

#[test]
fn saddle_inequalities_hold() {
    let d1 = gaussian_box(&v(&[1.0, -1.0]), &v(&[2.0, 1.0]), &eye(2));
    let d2 = gaussian_box(&v(&[-2.0, -1.0]), &v(&[-0.5, 1.0]), &(eye(2) * 2.0));
    let p = SaddleProblem::new(d1, d2).unwrap();
    let s = solve_saddle(&p).unwrap();
    let mut r = rng(7);
    for _ in 0..200 {
        let m1 = p.data1.m_set().sample(&mut r);
        let m2 = p.data2.m_set().sample(&mut r);
        let val = p.psi(&s.h_star, &m1, &m2).unwrap().value;
        assert!(val <= s.sad_val + s.gap + 1e-9, "μ side: {val} > {}", s.sad_val);
        let h = random_vec(&mut r, 2, 3.0);
        let val = p.psi(&h, &s.mu1_star, &s.mu2_star).unwrap().value;
        assert!(val >= s.sad_val - s.gap - 1e-9, "h side: {val} < {}", s.sad_val);
    }
    assert!(p.data1.m_set().contains(&s.mu1_star, 1e-9));
    assert!(p.data2.m_set().contains(&s.mu2_star, 1e-9));
    let br = best_response(&s.h_star, &p).unwrap();
    assert!(br.value - s.sad_val <= s.gap + 1e-9);
}

#[test]
fn saddle_value_is_unique_across_starts() {
    let d1 = poisson_family(ConvexSet::cuboid(v(&[2.0, 1.0]), v(&[3.0, 2.0])).unwrap()).unwrap();
    let d2 = poisson_family(ConvexSet::cuboid(v(&[0.5, 3.0]), v(&[1.0, 4.0])).unwrap()).unwrap();
    let p = SaddleProblem::new(d1, d2).unwrap();
    let a = solve_saddle(&p).unwrap();
    let mut r = rng(11);
    let h0 = random_vec(&mut r, 2, 2.0);
    let m1 = p.data1.m_set().sample(&mut r);
    let m2 = p.data2.m_set().sample(&mut r);
    let b = solve_saddle_from(&p, &h0, &m1, &m2).unwrap();
    assert!((a.sad_val - b.sad_val).abs() <= 2.0 * p.options.tol * a.sad_val.abs().max(1.0));
}

#[test]
fn random_gaussian_singletons_agree_with_closed_form() {
    let mut r = rng(3);
    for _ in 0..20 {
        let d = r.random_range(1..=8);
        let cov = random_spd(&mut r, d, 0.5, 2.0);
        let t1 = random_vec(&mut r, d, 1.5);
        let t2 = random_vec(&mut r, d, 1.5);
        let p = SaddleProblem::new(gaussian_singleton(&t1, &cov), gaussian_singleton(&t2, &cov)).unwrap();
        let s = solve_saddle(&p).unwrap();
        let diff = &t1 - &t2;
        let expect = -0.125 * diff.dot(&cov.clone().cholesky().unwrap().solve(&diff));
        assert_close(s.sad_val, expect, 1e-6 * expect.abs().max(1.0), "sad_val");
    }
}
