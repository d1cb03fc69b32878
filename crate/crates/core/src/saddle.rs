//! Saddle point of `Ψ(h; μ₁, μ₂) = ½[Φ₁(−h; μ₁) + Φ₂(h; μ₂)]` with a
//! duality-gap certificate.
//!
//! The solver runs a short averaged projected subgradient
//! descent/ascent as a warm start, then maximises the dual function
//! `D(μ) = min_h Ψ(h; μ)` by spectral projected gradient (Danskin
//! gradients) and certifies with the best-response upper bound
//! `Φ̄(h) = max_μ Ψ(h; μ)`. When the dual stalls, a Polyak subgradient pass
//! on `Φ̄` polishes the primal point.

use std::cell::RefCell;

use crate::error::{check_dim, Error, Result};
use crate::families::RegularData;
use crate::linalg::{self, Vector};
use crate::optim::{polyak_minimize, spg_maximize, spg_minimize, SpgOptions};
use crate::sets::ConvexSet;

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Relative tolerance on the duality gap.
    pub tol: f64,
    /// Cap on outer (dual) iterations.
    pub max_iter: usize,
    /// Initial search radius when `H` is unbounded.
    pub radius: f64,
    pub max_radius: f64,
    pub warm_start_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 100_000,
            radius: 1e3,
            max_radius: 1e6,
            warm_start_iters: 200,
        }
    }
}

/// Pair of regular data sharing `H`.
#[derive(Clone, Debug)]
pub struct SaddleProblem {
    pub data1: RegularData,
    pub data2: RegularData,
    pub options: SolverOptions,
}

/// `Ψ` with its partial (super/sub)gradients.
#[derive(Clone, Debug)]
pub struct PsiEval {
    pub value: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub grad_h: Vector,
    pub grad_mu1: Vector,
    pub grad_mu2: Vector,
}

impl SaddleProblem {
    pub fn new(data1: RegularData, data2: RegularData) -> Result<Self> {
        check_dim("observation dimension of the pair", data1.obs_dim(), data2.obs_dim())?;
        if !data1.h_set().same_as(data2.h_set()) {
            return Err(Error::InvalidArgument("the two regular data must share H".into()));
        }
        Ok(Self {
            data1,
            data2,
            options: SolverOptions::default(),
        })
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    pub fn dim(&self) -> usize {
        self.data1.obs_dim()
    }

    pub fn psi(&self, h: &Vector, mu1: &Vector, mu2: &Vector) -> Result<PsiEval> {
        let e1 = self.data1.eval(&-h, mu1)?;
        let e2 = self.data2.eval(h, mu2)?;
        Ok(PsiEval {
            value: 0.5 * (e1.value + e2.value),
            phi1: e1.value,
            phi2: e2.value,
            grad_h: (e2.grad_h - e1.grad_h) * 0.5,
            grad_mu1: e1.grad_mu * 0.5,
            grad_mu2: e2.grad_mu * 0.5,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Certified,
    /// Perfectly separable pair: the saddle value diverges to `−∞`.
    Degenerate,
}

#[derive(Clone, Debug)]
pub struct SaddleSolution {
    pub h_star: Vector,
    pub mu1_star: Vector,
    pub mu2_star: Vector,
    /// `Ψ(h*; μ₁*, μ₂*)`.
    pub sad_val: f64,
    /// Best-response value `Φ̄(h*)`.
    pub upper: f64,
    /// Dual value `min_h Ψ(h; μ*)`.
    pub lower: f64,
    pub gap: f64,
    pub iterations: usize,
    /// Search radius in force at termination.
    pub radius: f64,
    pub status: SolveStatus,
}

impl SaddleSolution {
    pub fn risk(&self) -> f64 {
        self.sad_val.exp().min(1.0)
    }

    pub fn is_certified(&self, tol: f64) -> bool {
        self.status == SolveStatus::Certified && self.gap <= tol * self.sad_val.abs().max(1.0)
    }
}

#[derive(Clone, Debug)]
pub struct BestResponse {
    pub mu1: Vector,
    pub mu2: Vector,
    pub value: f64,
}

fn inner_opts() -> SpgOptions {
    SpgOptions { max_iter: 5_000, tol: 1e-11, memory: 10 }
}

fn maximize_side(data: &RegularData, h: &Vector, start: &Vector) -> Result<(Vector, f64)> {
    let m = data.m_set();
    if let Some(p) = m.as_singleton() {
        return Ok((p.clone(), data.phi(h, p)?));
    }
    let res = spg_maximize(
        |mu| {
            let e = data.eval(h, mu)?;
            Ok((e.value, e.grad_mu))
        },
        |x| m.project(x),
        start,
        &SpgOptions { max_iter: 10_000, tol: 1e-12, memory: 10 },
    )?;
    if !res.converged && res.pg_norm > 1e-7 * res.f.abs().max(1.0) {
        return Err(Error::NonConvergence {
            context: "best response".into(),
            iterations: res.iterations,
            residual: res.pg_norm,
        });
    }
    Ok((res.x, res.f))
}

fn best_response_from(h: &Vector, p: &SaddleProblem, s1: &Vector, s2: &Vector) -> Result<BestResponse> {
    let (mu1, v1) = maximize_side(&p.data1, &-h, s1)?;
    let (mu2, v2) = maximize_side(&p.data2, h, s2)?;
    Ok(BestResponse { mu1, mu2, value: 0.5 * (v1 + v2) })
}

/// `max_{μ₁∈M₁, μ₂∈M₂} Ψ(h; μ₁, μ₂)`, solved separately in `μ₁` and `μ₂`.
pub fn best_response(h: &Vector, problem: &SaddleProblem) -> Result<BestResponse> {
    check_dim("best response h", problem.dim(), h.len())?;
    best_response_from(h, problem, &problem.data1.m_set().anchor(), &problem.data2.m_set().anchor())
}

struct Ctx<'a> {
    p: &'a SaddleProblem,
    domain: Option<ConvexSet>,
}

impl<'a> Ctx<'a> {
    fn new(p: &'a SaddleProblem, radius: f64) -> Result<Self> {
        let hs = p.data1.h_set();
        let domain = if hs.bound_radius().is_some() {
            None
        } else {
            let ball = ConvexSet::ball(Vector::zeros(hs.dim()), radius)?;
            if hs.is_full() {
                Some(ball)
            } else {
                Some(ConvexSet::intersection(vec![hs.clone(), ball])?)
            }
        };
        Ok(Self { p, domain })
    }

    fn unbounded(&self) -> bool {
        self.domain.is_some()
    }

    fn project_h(&self, h: &Vector) -> Vector {
        match &self.domain {
            Some(d) => d.project(h),
            None => self.p.data1.h_set().project(h),
        }
    }

    fn project_mu(&self, mu: &Vector) -> Vector {
        let n1 = self.p.data1.param_dim();
        let n2 = self.p.data2.param_dim();
        let a = self.p.data1.m_set().project(&linalg::block(mu, 0, n1));
        let b = self.p.data2.m_set().project(&linalg::block(mu, n1, n2));
        linalg::concat(&[&a, &b])
    }

    fn split(&self, mu: &Vector) -> (Vector, Vector) {
        let n1 = self.p.data1.param_dim();
        let n2 = self.p.data2.param_dim();
        (linalg::block(mu, 0, n1), linalg::block(mu, n1, n2))
    }

    /// `min_h Ψ(h; μ)`: minimiser, value and the μ-gradient at the minimiser.
    fn inner_min(&self, mu: &Vector, h0: &Vector) -> Result<(Vector, f64, Vector)> {
        let (mu1, mu2) = self.split(mu);
        let res = spg_minimize(
            |h| {
                let e = self.p.psi(h, &mu1, &mu2)?;
                Ok((e.value, e.grad_h))
            },
            |h| self.project_h(h),
            h0,
            &inner_opts(),
        )?;
        let e = self.p.psi(&res.x, &mu1, &mu2)?;
        let g = linalg::concat(&[&e.grad_mu1, &e.grad_mu2]);
        Ok((res.x, e.value, g))
    }

    fn upper(&self, h: &Vector, s1: &Vector, s2: &Vector) -> Result<BestResponse> {
        best_response_from(h, self.p, s1, s2)
    }
}

struct State {
    h: Vector,
    mu: Vector,
    lower: f64,
    upper_h: Vector,
    upper: f64,
    br: BestResponse,
    iterations: usize,
}

fn warm_start(ctx: &Ctx, h: &Vector, mu: &Vector, iters: usize) -> Result<(Vector, Vector)> {
    if iters == 0 {
        return Ok((h.clone(), mu.clone()));
    }
    let (_, r1) = ctx.p.data1.m_set().enclosing_ball().unwrap_or((Vector::zeros(0), 1.0));
    let (_, r2) = ctx.p.data2.m_set().enclosing_ball().unwrap_or((Vector::zeros(0), 1.0));
    let rmu = r1.max(r2).max(1e-3);
    let mut h = ctx.project_h(h);
    let mut mu = ctx.project_mu(mu);
    let mut h_avg = Vector::zeros(h.len());
    let mut mu_avg = Vector::zeros(mu.len());
    let mut weight = 0.0;
    for t in 1..=iters {
        let (mu1, mu2) = ctx.split(&mu);
        let e = match ctx.p.psi(&h, &mu1, &mu2) {
            Ok(e) => e,
            Err(_) => break,
        };
        let gmu = linalg::concat(&[&e.grad_mu1, &e.grad_mu2]);
        let st = 1.0 / (t as f64).sqrt();
        let gh = e.grad_h.norm().max(1.0);
        let gm = gmu.norm().max(1e-12);
        h = ctx.project_h(&(&h - &e.grad_h * (st / gh)));
        mu = ctx.project_mu(&(&mu + &gmu * (st * rmu / gm)));
        h_avg += &h;
        mu_avg += &mu;
        weight += 1.0;
    }
    if weight == 0.0 {
        return Ok((h, mu));
    }
    Ok((ctx.project_h(&(h_avg / weight)), ctx.project_mu(&(mu_avg / weight))))
}

fn certify(ctx: &Ctx, st: &mut State, h: &Vector) -> Result<()> {
    let (s1, s2) = (st.br.mu1.clone(), st.br.mu2.clone());
    let br = ctx.upper(h, &s1, &s2)?;
    if br.value < st.upper {
        st.upper = br.value;
        st.upper_h = h.clone();
        st.br = br;
    }
    Ok(())
}

fn dual_phase(ctx: &Ctx, st: &mut State) -> Result<()> {
    let opts = &ctx.p.options;
    let warm = RefCell::new(st.h.clone());
    let dual_eval = |mu: &Vector| -> Result<(f64, Vector)> {
        let h0 = warm.borrow().clone();
        let (h, v, g) = ctx.inner_min(mu, &h0)?;
        *warm.borrow_mut() = h;
        Ok((-v, -g))
    };
    let mut stalls = 0;
    let mut stall_gap = f64::INFINITY;
    loop {
        let chunk = SpgOptions { max_iter: 100, tol: 1e-13, memory: 10 };
        let res = spg_minimize(&dual_eval, |m| ctx.project_mu(m), &st.mu, &chunk)?;
        st.iterations += res.iterations.max(1);
        let h0 = warm.borrow().clone();
        let (h, val, _) = ctx.inner_min(&res.x, &h0)?;
        *warm.borrow_mut() = h.clone();
        let improved = val > st.lower + 1e-15 * st.lower.abs().max(1.0);
        if val > st.lower || !st.lower.is_finite() {
            st.lower = val;
            st.mu = res.x.clone();
            st.h = h.clone();
        }
        certify(ctx, st, &h)?;
        let target = opts.tol * 0.5 * st.lower.abs().max(1.0);
        if st.upper - st.lower <= target {
            return Ok(());
        }
        if st.lower < -1e3 && ctx.unbounded() {
            return Ok(());
        }
        if res.converged || !improved {
            stalls += 1;
            let lower = st.lower;
            let (mut s1, mut s2) = (st.br.mu1.clone(), st.br.mu2.clone());
            let (hp, fp) = polyak_minimize(
                |h| {
                    let br = ctx.upper(h, &s1, &s2)?;
                    s1 = br.mu1.clone();
                    s2 = br.mu2.clone();
                    let e = ctx.p.psi(h, &br.mu1, &br.mu2)?;
                    Ok((br.value, e.grad_h))
                },
                |h| ctx.project_h(h),
                &st.upper_h,
                lower,
                500,
            )?;
            if fp < st.upper {
                certify(ctx, st, &hp)?;
            }
            let gap = st.upper - st.lower;
            if gap <= target {
                return Ok(());
            }
            if gap < 0.5 * stall_gap {
                stalls = 0;
            }
            stall_gap = stall_gap.min(gap);
            if stalls >= 3 {
                return Ok(());
            }
        }
        if st.iterations >= opts.max_iter {
            return Ok(());
        }
    }
}

/// Solve from the default starting point (`h = 0`, anchors of `M₁`, `M₂`).
pub fn solve_saddle(problem: &SaddleProblem) -> Result<SaddleSolution> {
    let h0 = Vector::zeros(problem.dim());
    let mu1 = problem.data1.m_set().anchor();
    let mu2 = problem.data2.m_set().anchor();
    solve_saddle_from(problem, &h0, &mu1, &mu2)
}

pub fn solve_saddle_from(problem: &SaddleProblem, h0: &Vector, mu1: &Vector, mu2: &Vector) -> Result<SaddleSolution> {
    check_dim("starting h", problem.dim(), h0.len())?;
    check_dim("starting μ₁", problem.data1.param_dim(), mu1.len())?;
    check_dim("starting μ₂", problem.data2.param_dim(), mu2.len())?;
    let opts = problem.options.clone();
    let mut radius = opts.radius;
    let mut ctx = Ctx::new(problem, radius)?;
    let mu0 = linalg::concat(&[mu1, mu2]);
    let (h, mu) = warm_start(&ctx, h0, &mu0, opts.warm_start_iters)?;
    let (m1, m2) = ctx.split(&mu);
    let br = ctx.upper(&h, &m1, &m2)?;
    let mut st = State {
        upper_h: h.clone(),
        upper: br.value,
        br,
        h,
        mu,
        lower: f64::NEG_INFINITY,
        iterations: 0,
    };
    loop {
        dual_phase(&ctx, &mut st)?;
        let on_boundary = ctx.unbounded() && st.upper_h.norm() >= 0.999 * radius;
        if st.lower < -1e3 && ctx.unbounded() {
            break;
        }
        if on_boundary && radius < opts.max_radius && st.iterations < opts.max_iter {
            log::warn!("saddle iterate reached search radius {radius:.1e}; coercivity of Ψ not verified, doubling");
            radius = (radius * 2.0).min(opts.max_radius);
            ctx = Ctx::new(problem, radius)?;
            continue;
        }
        break;
    }
    let (mu1s, mu2s) = ctx.split(&st.mu);
    let e = problem.psi(&st.upper_h, &mu1s, &mu2s)?;
    let degenerate = ctx.unbounded() && st.lower < -1e3;
    let sol = SaddleSolution {
        h_star: st.upper_h.clone(),
        mu1_star: mu1s,
        mu2_star: mu2s,
        sad_val: e.value,
        upper: st.upper,
        lower: st.lower,
        gap: (st.upper - st.lower).max(0.0),
        iterations: st.iterations,
        radius,
        status: if degenerate { SolveStatus::Degenerate } else { SolveStatus::Certified },
    };
    if degenerate {
        log::warn!("hypotheses are perfectly separable within radius {radius:.1e}; risk bound is not certified");
        return Ok(sol);
    }
    if sol.gap > opts.tol * sol.sad_val.abs().max(1.0) {
        let gap = sol.gap;
        return Err(Error::SaddleNonConvergence { best: Box::new(sol), gap });
    }
    Ok(sol)
}
