//! Affine detectors, `K`-repeated pairwise tests and the Gaussian closed forms.

use crate::error::{check_dim, Error, Result};
use crate::families::{gaussian_param_set, sub_gaussian_family};
use crate::linalg::{self, Matrix, Vector};
use crate::saddle::{solve_saddle, SaddleProblem, SaddleSolution, SolveStatus, SolverOptions};
use crate::sets::ConvexSet;

/// `φ(ω) = hᵀω + a` with its certified risk.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineDetector {
    pub h: Vector,
    pub a: f64,
    /// `ε* = exp(Ψ(h*; μ*))`.
    pub risk: f64,
    /// Duality gap inherited from the saddle solution.
    pub gap: f64,
    pub certified: bool,
}

impl AffineDetector {
    /// The trivial detector `φ ≡ 0` with risk 1.
    pub fn zero(d: usize) -> Self {
        Self {
            h: Vector::zeros(d),
            a: 0.0,
            risk: 1.0,
            gap: 0.0,
            certified: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn eval(&self, omega: &Vector) -> f64 {
        self.h.dot(omega) + self.a
    }

    /// `−φ`, the detector for the swapped pair.
    pub fn negated(&self) -> Self {
        Self {
            h: -&self.h,
            a: -self.a,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hypothesis {
    H1,
    H2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestVerdict {
    pub accepted: Hypothesis,
    pub statistic: f64,
}

impl TestVerdict {
    /// A statistic of exactly zero accepts `H1`.
    pub fn from_statistic(statistic: f64) -> Self {
        let accepted = if statistic >= 0.0 { Hypothesis::H1 } else { Hypothesis::H2 };
        Self { accepted, statistic }
    }
}

/// Detector of a certified saddle point: `a = ½[Φ₁(−h*; μ₁*) − Φ₂(h*; μ₂*)]`.
pub fn build_detector(solution: &SaddleSolution, problem: &SaddleProblem, force: bool) -> Result<AffineDetector> {
    let certified = solution.is_certified(problem.options.tol);
    if !certified && !force {
        return Err(Error::Uncertified { gap: solution.gap });
    }
    let e = problem.psi(&solution.h_star, &solution.mu1_star, &solution.mu2_star)?;
    Ok(AffineDetector {
        h: solution.h_star.clone(),
        a: 0.5 * (e.phi1 - e.phi2),
        risk: e.value.exp().min(1.0),
        gap: solution.gap,
        certified,
    })
}

/// `Σ_t (hᵀω_t + a)`.
pub fn apply_repeated(det: &AffineDetector, observations: &[Vector]) -> Result<f64> {
    let mut s = 0.0;
    for w in observations {
        check_dim("observation", det.dim(), w.len())?;
        s += det.eval(w);
    }
    Ok(s)
}

pub fn run_test(det: &AffineDetector, observations: &[Vector]) -> Result<TestVerdict> {
    Ok(TestVerdict::from_statistic(apply_repeated(det, observations)?))
}

/// Risk of the `K`-repeated test, `ε*^K`.
pub fn risk_after_k(eps_star: f64, k: usize) -> Result<f64> {
    if !(eps_star > 0.0 && eps_star <= 1.0) {
        return Err(Error::InvalidArgument(format!("risk {eps_star} outside (0, 1]")));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    Ok(eps_star.powi(k as i32))
}

/// Ratio of the repetition count needed by the detector-based test to the
/// count needed by the ideal test at risk `δ`; returned unrounded (use
/// `ceil` for an integer count).
pub fn k_to_match_ideal(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidArgument(format!("δ = {delta} outside (0, ½)")));
    }
    Ok(2.0 / (1.0 - (4.0 * (1.0 - delta)).ln() / (1.0 / delta).ln()))
}

/// The paper's "Erf": upper tail of the standard normal law,
/// `Erf(s) = ∫_s^∞ (2π)^{-1/2} e^{-r²/2} dr`. Not the conventional `erf`.
pub fn erf_upper(s: f64) -> f64 {
    linalg::normal_upper_tail(s)
}

/// Error bounds `(Erf(δ − α/δ), Erf(δ − β/δ))` of the Gaussian test with
/// threshold shifts `α`, `β`.
pub fn erf_risk(delta: f64, alpha: f64, beta: f64) -> Result<(f64, f64)> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument("δ must be nonnegative".into()));
    }
    let d2 = delta * delta;
    if alpha > d2 || beta > d2 {
        return Err(Error::InvalidArgument(format!("shifts α={alpha}, β={beta} exceed δ²={d2}")));
    }
    if delta == 0.0 {
        return Ok((0.5, 0.5));
    }
    Ok((erf_upper(delta - alpha / delta), erf_upper(delta - beta / delta)))
}

/// Symmetric Gaussian pair: mean sets `U₁`, `U₂`, shared covariance set.
#[derive(Clone, Debug)]
pub struct GaussianPairSpec {
    pub u1: ConvexSet,
    pub u2: ConvexSet,
    /// Flattened covariance matrices.
    pub ucov: ConvexSet,
    pub theta_star: Matrix,
}

impl GaussianPairSpec {
    pub fn new(u1: ConvexSet, u2: ConvexSet, ucov: ConvexSet, theta_star: Matrix) -> Result<Self> {
        let d = u1.dim();
        check_dim("second mean set", d, u2.dim())?;
        check_dim("covariance set", d * d, ucov.dim())?;
        check_dim("Θ*", d, theta_star.nrows())?;
        if u1.bound_radius().is_none() {
            return Err(Error::InvalidArgument("U₁ must be bounded".into()));
        }
        if !linalg::is_psd(&theta_star, 1e-10) {
            return Err(Error::InvalidParameter("Θ* is not positive semidefinite".into()));
        }
        Ok(Self { u1, u2, ucov, theta_star })
    }

    pub fn dim(&self) -> usize {
        self.u1.dim()
    }
}

/// Gaussian detector `φ*(ω) = h*ᵀ(ω − w*)` and `δ = √(h*ᵀΘ*h*)`.
///
/// Singleton means and covariance use the closed form
/// `h* = ½Θ*⁻¹(θ₁ − θ₂)`; otherwise the saddle problem over
/// `U_χ × 𝒰` is solved.
pub fn gaussian_symmetric_detector(spec: &GaussianPairSpec, options: &SolverOptions) -> Result<(AffineDetector, f64)> {
    let d = spec.dim();
    if let (Some(t1), Some(t2), Some(_)) = (spec.u1.as_singleton(), spec.u2.as_singleton(), spec.ucov.as_singleton()) {
        let cov = &spec.theta_star;
        let diff = t1 - t2;
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("Θ* must be positive definite".into()))?;
        let h = chol.solve(&diff) * 0.5;
        let w = (t1 + t2) * 0.5;
        let delta = h.dot(&(cov * &h)).sqrt();
        let risk = (-0.125 * diff.dot(&chol.solve(&diff))).exp();
        let a = -h.dot(&w);
        return Ok((AffineDetector { h, a, risk, gap: 0.0, certified: true }, delta));
    }
    let d1 = sub_gaussian_family(gaussian_param_set(spec.u1.clone(), spec.ucov.clone())?)?;
    let d2 = sub_gaussian_family(gaussian_param_set(spec.u2.clone(), spec.ucov.clone())?)?;
    let problem = SaddleProblem::new(d1, d2)?.with_options(options.clone());
    let sol = solve_saddle(&problem)?;
    if sol.status == SolveStatus::Degenerate {
        return Err(Error::Uncertified { gap: sol.gap });
    }
    let det = crate::detector::build_detector(&sol, &problem, false)?;
    let cov = linalg::mat_of(&sol.mu1_star.as_slice()[d..], d);
    let delta = det.h.dot(&(&cov * &det.h)).max(0.0).sqrt();
    Ok((det, delta))
}
