//! Quadratic lifting of Gaussian observations: lifted regular data over
//! `(h, H) ∈ H_γ`, quadratic detectors, the special-case affine reduction
//! and the bounded-observation oracle hook.
//!
//! Variables are stored as `x = [h; vec H̃]` with `H̃ = R H R`, where
//! `R = Θ̂^{1/2}` for a reference matrix `Θ̂` dominating the `Θ*` in use.
//! The band `−γΘ̂⁻¹ ⪯ H ⪯ γΘ̂⁻¹` becomes `|λ(H̃)| ≤ γ`, so projection is a
//! spectral clip.
//!
//! With the special-case `𝒵` the support function `φ_𝒵` is evaluated as a
//! concave maximisation over `u ∈ U`, so the parameter of the lifted family
//! is `μ = [vec Θ; u]`. The matrix block of `𝒵` is additionally bounded by
//! `Tr(V − 2cuᵀ + ccᵀ) ≤ r²` for an enclosing ball `(c, r)` of `U`, which keeps
//! `φ_𝒵` finite and leaves `Φ(h, 0; Θ)` unchanged.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detector::{build_detector, AffineDetector};
use crate::error::{check_dim, Error, Result};
use crate::families::{bounded_support_family, refine_with_support, sub_gaussian_family, FamilyKind, PhiEval, PhiOracle, RegularData};
use crate::linalg::{self, Matrix, Vector};
use crate::optim::{spg_maximize, SpgOptions};
use crate::saddle::{solve_saddle, SaddleProblem, SolverOptions};
use crate::sets::{ConvexSet, HalfSpace, SetOracle};

pub const DEFAULT_GAMMA: f64 = 0.99;
/// Bound on `‖h‖` inside the lifted domain.
pub const DEFAULT_H_RADIUS: f64 = 1e4;

/// Support function of a compact set of symmetric `n×n` matrices:
/// returns `max_{Z} Tr(ZW)` and a maximiser.
pub trait MatrixSupport: fmt::Debug + Send + Sync {
    fn size(&self) -> usize;
    fn support(&self, w: &Matrix) -> Result<(f64, Matrix)>;
}

/// Description of the set `𝒵 ⊂ {W ⪰ 0, W_{m+1,m+1} = 1}`.
#[derive(Clone, Debug)]
pub enum ZSet {
    /// `{[V u; uᵀ 1] ⪰ 0 : u ∈ U}` intersected with the trace bound above.
    Special,
    Oracle(Arc<dyn MatrixSupport>),
}

/// Gaussian data `ζ ~ N(A[u;1], Θ)`, `u ∈ U`, `Θ ∈ 𝒰`.
#[derive(Clone, Debug)]
pub struct QuadLiftSpec {
    /// `d × (m+1)`.
    pub a: Matrix,
    pub u: ConvexSet,
    /// Flattened `d×d` covariance matrices.
    pub ucov: ConvexSet,
    pub theta_star: Matrix,
    pub gamma: f64,
    pub delta: f64,
    pub z: ZSet,
}

impl QuadLiftSpec {
    /// Spec with `γ = 0.99`, `δ` from [`compute_delta`] and the special-case `𝒵`.
    pub fn new(a: Matrix, u: ConvexSet, ucov: ConvexSet, theta_star: Matrix) -> Result<Self> {
        let d = a.nrows();
        let m = u.dim();
        if m == 0 {
            return Err(Error::InvalidArgument("U must have positive dimension".into()));
        }
        check_dim("columns of A", m + 1, a.ncols())?;
        check_dim("covariance set", d * d, ucov.dim())?;
        check_dim("Θ* rows", d, theta_star.nrows())?;
        check_dim("Θ* columns", d, theta_star.ncols())?;
        if u.enclosing_ball().is_none() {
            return Err(Error::InvalidArgument("U must be bounded".into()));
        }
        if linalg::sym(&theta_star).cholesky().is_none() {
            return Err(Error::InvalidParameter("Θ* must be positive definite".into()));
        }
        let theta_star = linalg::sym(&theta_star);
        let delta = compute_delta(&ucov, &theta_star)?;
        let spec = Self { a, u, ucov, theta_star, gamma: DEFAULT_GAMMA, delta, z: ZSet::Special };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!("γ = {gamma} outside (0, 1)")));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        if !(0.0..=2.0).contains(&delta) {
            return Err(Error::InvalidParameter(format!("δ = {delta} outside [0, 2]")));
        }
        self.delta = delta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_z(mut self, z: ZSet) -> Result<Self> {
        if let ZSet::Oracle(o) = &z {
            check_dim("𝒵 oracle size", self.mean_dim() + 1, o.size())?;
        }
        self.z = z;
        self.validate()?;
        Ok(self)
    }

    pub fn obs_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn mean_dim(&self) -> usize {
        self.u.dim()
    }

    /// `𝒜(u) = A[u;1]`.
    pub fn mean(&self, u: &Vector) -> Vector {
        &self.a * augment(u)
    }

    /// `δ(2+δ)/(2(1−γ))`.
    pub fn frobenius_coef(&self) -> f64 {
        self.delta * (2.0 + self.delta) / (2.0 * (1.0 - self.gamma))
    }

    /// Check `Θ ⪯ Θ*`, the `δ` bound and `Z(u) ∈ 𝒵` on sampled points.
    pub fn validate(&self) -> Result<()> {
        let d = self.obs_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(0x11f7);
        let inv_sqrt = linalg::inv_sqrtm_pd(&self.theta_star)?;
        let mut covs = vec![self.ucov.anchor()];
        covs.extend((0..16).map(|_| self.ucov.sample(&mut rng)));
        for c in covs {
            let cov = linalg::sym(&linalg::mat_of(c.as_slice(), d));
            if !linalg::is_psd(&cov, 1e-9) {
                return Err(Error::InvalidParameter("covariance set contains a non-psd matrix".into()));
            }
            if !linalg::is_psd(&(&self.theta_star - &cov), 1e-9) {
                return Err(Error::InvalidParameter("Θ* does not dominate the covariance set".into()));
            }
            let dev = linalg::spectral_norm(&(linalg::sqrtm_psd(&cov) * &inv_sqrt - Matrix::identity(d, d)));
            if dev > self.delta + 1e-7 {
                return Err(Error::InvalidParameter(format!("δ = {} is below the observed deviation {dev}", self.delta)));
            }
        }
        if let ZSet::Oracle(o) = &self.z {
            let n = self.mean_dim() + 1;
            let mut us = vec![self.u.anchor()];
            us.extend((0..8).map(|_| self.u.sample(&mut rng)));
            for u in us {
                let z = augment(&u);
                let zu = &z * z.transpose();
                for _ in 0..4 {
                    let g = Matrix::from_fn(n, n, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
                    let w = linalg::sym(&g);
                    let (s, _) = o.support(&w)?;
                    if (zu.component_mul(&w)).sum() > s + 1e-7 * (1.0 + s.abs()) {
                        return Err(Error::InvalidParameter("𝒵 does not contain Z(u) for some u ∈ U".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

fn augment(u: &Vector) -> Vector {
    let mut z = Vector::zeros(u.len() + 1);
    z.rows_mut(0, u.len()).copy_from(u);
    z[u.len()] = 1.0;
    z
}

/// `max ‖Θ^{1/2}Θ*^{−1/2} − I‖` over `𝒰`, capped at 2.
///
/// Exact for a singleton and for the interval `aΘ* ⪯ Θ ⪯ Θ*` with scalar
/// `Θ*`; any other set gets the universal value 2.
pub fn compute_delta(ucov: &ConvexSet, theta_star: &Matrix) -> Result<f64> {
    let d = theta_star.nrows();
    check_dim("covariance set", d * d, ucov.dim())?;
    let inv_sqrt = linalg::inv_sqrtm_pd(theta_star)?;
    if let Some(p) = ucov.as_singleton() {
        let cov = linalg::sym(&linalg::mat_of(p.as_slice(), d));
        let dev = linalg::spectral_norm(&(linalg::sqrtm_psd(&cov) * &inv_sqrt - Matrix::identity(d, d)));
        return Ok(dev.min(2.0));
    }
    if let Some((lo, hi)) = ucov.as_psd_interval() {
        let scale = theta_star.amax().max(1e-300);
        let star_scalar = Matrix::identity(d, d) * theta_star.diagonal().mean();
        if (hi - theta_star).amax() <= 1e-12 * scale && (theta_star - star_scalar).amax() <= 1e-12 * scale {
            let ratio = (&inv_sqrt * lo * &inv_sqrt).diagonal().mean();
            let scalar = Matrix::identity(d, d) * ratio;
            if (&inv_sqrt * lo * &inv_sqrt - scalar).amax() <= 1e-10 && ratio >= 0.0 {
                return Ok((1.0 - ratio.min(1.0).sqrt()).min(2.0));
            }
        }
    }
    Ok(2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftMode {
    Full,
    /// `H = 0`.
    AffineOnly,
    /// `h = 0`.
    QuadraticOnly,
}

#[derive(Debug)]
struct BandSet {
    d: usize,
    gamma: f64,
    h_radius: f64,
    mode: LiftMode,
}

impl BandSet {
    fn split(&self, x: &Vector) -> (Vector, Matrix) {
        let h = linalg::block(x, 0, self.d);
        let m = linalg::mat_of(&x.as_slice()[self.d..], self.d);
        (h, m)
    }
}

impl SetOracle for BandSet {
    fn dim(&self) -> usize {
        self.d + self.d * self.d
    }

    fn contains(&self, x: &Vector, tol: f64) -> bool {
        let (h, m) = self.split(x);
        let h_ok = match self.mode {
            LiftMode::QuadraticOnly => h.amax() <= tol,
            _ => h.norm() <= self.h_radius * (1.0 + tol),
        };
        let m_ok = match self.mode {
            LiftMode::AffineOnly => m.amax() <= tol,
            _ => {
                (&m - m.transpose()).amax() <= tol * (1.0 + m.amax())
                    && linalg::eigh(&m).eigenvalues.iter().all(|l| l.abs() <= self.gamma + tol)
            }
        };
        h_ok && m_ok
    }

    fn project(&self, x: &Vector) -> Vector {
        let (mut h, m) = self.split(x);
        match self.mode {
            LiftMode::QuadraticOnly => h.fill(0.0),
            _ => {
                let n = h.norm();
                if n > self.h_radius {
                    h *= self.h_radius / n;
                }
            }
        }
        let m = match self.mode {
            LiftMode::AffineOnly => Matrix::zeros(self.d, self.d),
            _ => linalg::clip_eigenvalues(&m, -self.gamma, self.gamma),
        };
        linalg::concat(&[&h, &linalg::vec_of(&m)])
    }

    fn bound_radius(&self) -> Option<f64> {
        Some((self.h_radius * self.h_radius + self.gamma * self.gamma * self.d as f64).sqrt())
    }
}

/// Coordinates and domain shared by the lifted families of one problem.
#[derive(Clone, Debug)]
pub struct LiftFrame {
    d: usize,
    gamma: f64,
    mode: LiftMode,
    r: Matrix,
    r_inv: Matrix,
    theta_ref: Matrix,
    set: ConvexSet,
}

impl LiftFrame {
    pub fn new(theta_ref: &Matrix, gamma: f64, mode: LiftMode) -> Result<Self> {
        Self::with_radius(theta_ref, gamma, mode, DEFAULT_H_RADIUS)
    }

    pub fn with_radius(theta_ref: &Matrix, gamma: f64, mode: LiftMode, h_radius: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!("γ = {gamma} outside (0, 1)")));
        }
        if !(h_radius > 0.0) {
            return Err(Error::InvalidArgument("h radius must be positive".into()));
        }
        let d = theta_ref.nrows();
        let theta_ref = linalg::sym(theta_ref);
        let r_inv = linalg::inv_sqrtm_pd(&theta_ref)?;
        let r = linalg::sqrtm_psd(&theta_ref);
        let set = ConvexSet::custom(Arc::new(BandSet { d, gamma, h_radius, mode }));
        Ok(Self { d, gamma, mode, r, r_inv, theta_ref, set })
    }

    /// Frame for a pair: `Θ̂ = max(1, λ_max(Θ*₁^{−1/2}Θ*₂Θ*₁^{−1/2}))·Θ*₁`
    /// dominates both `Θ*`, and `γ = min(γ₁, γ₂)`.
    pub fn for_pair(s1: &QuadLiftSpec, s2: &QuadLiftSpec, mode: LiftMode) -> Result<Self> {
        check_dim("observation dimension of the pair", s1.obs_dim(), s2.obs_dim())?;
        let w = linalg::inv_sqrtm_pd(&s1.theta_star)?;
        let ratio = linalg::max_eigenvalue(&(&w * &s2.theta_star * &w)).max(1.0);
        Self::new(&(&s1.theta_star * ratio), s1.gamma.min(s2.gamma), mode)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mode(&self) -> LiftMode {
        self.mode
    }

    pub fn theta_ref(&self) -> &Matrix {
        &self.theta_ref
    }

    /// The domain as a set in `ℝ^{d+d²}`.
    pub fn set(&self) -> &ConvexSet {
        &self.set
    }

    /// `x = [h; vec(R H R)]`.
    pub fn encode(&self, h: &Vector, hmat: &Matrix) -> Vector {
        let ht = &self.r * linalg::sym(hmat) * &self.r;
        linalg::concat(&[h, &linalg::vec_of(&ht)])
    }

    /// Inverse of [`encode`](Self::encode).
    pub fn decode(&self, x: &Vector) -> (Vector, Matrix) {
        let h = linalg::block(x, 0, self.d);
        let ht = linalg::sym(&linalg::mat_of(&x.as_slice()[self.d..], self.d));
        (h, linalg::sym(&(&self.r_inv * ht * &self.r_inv)))
    }

    /// `[ζ; ½ vec(R⁻¹ζζᵀR⁻¹)]`, so that `⟨x, ω⟩ = hᵀζ + ½ζᵀHζ`.
    pub fn lift_observation(&self, zeta: &Vector) -> Vector {
        let y = &self.r_inv * zeta;
        let outer = &y * y.transpose() * 0.5;
        linalg::concat(&[zeta, &linalg::vec_of(&outer)])
    }
}

/// Value and gradients of the lifted `Φ̃(h, H; Θ, u)` in raw coordinates.
struct LiftedEval {
    value: f64,
    grad_h: Vector,
    grad_hmat: Matrix,
    grad_theta: Matrix,
    grad_u: Vector,
}

#[derive(Debug)]
struct LiftedCore {
    d: usize,
    m: usize,
    a: Matrix,
    b_mat: Matrix,
    theta_star: Matrix,
    theta_star_inv: Matrix,
    logdet_star: f64,
    coef: f64,
    z: ZSet,
    ball_c: Vector,
    ball_r2: f64,
}

impl LiftedCore {
    fn new(spec: &QuadLiftSpec) -> Result<Self> {
        let d = spec.obs_dim();
        let m = spec.mean_dim();
        let chol = spec
            .theta_star
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("Θ* must be positive definite".into()))?;
        let logdet_star = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let mut b_mat = Matrix::zeros(d + 1, m + 1);
        b_mat.rows_mut(0, d).copy_from(&spec.a);
        b_mat[(d, m)] = 1.0;
        let (ball_c, r) = spec.u.enclosing_ball().ok_or_else(|| Error::InvalidArgument("U must be bounded".into()))?;
        Ok(Self {
            d,
            m,
            a: spec.a.clone(),
            b_mat,
            theta_star: spec.theta_star.clone(),
            theta_star_inv: linalg::sym(&chol.inverse()),
            logdet_star,
            coef: spec.frobenius_coef(),
            z: spec.z.clone(),
            ball_c,
            ball_r2: r * r,
        })
    }

    fn eval(&self, h: &Vector, hmat: &Matrix, theta: &Matrix, u: &Vector) -> Result<LiftedEval> {
        let (d, m) = (self.d, self.m);
        let k = &self.theta_star_inv - hmat;
        let chol = k
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Domain("H outside the lifted domain: Θ*⁻¹ − H is not positive definite".into()))?;
        let logdet_k = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let s = linalg::sym(&chol.inverse());
        let logdet_term = -0.5 * (self.logdet_star + logdet_k);
        let dtheta = theta - &self.theta_star;
        let tr_term = 0.5 * dtheta.component_mul(hmat).sum();
        let th = &self.theta_star * hmat;
        let frob_term = self.coef * (&th * &th).trace();

        let mut jmat = Matrix::zeros(d, d + 1);
        jmat.columns_mut(0, d).copy_from(hmat);
        jmat.column_mut(d).copy_from(h);
        let jb = &jmat * &self.b_mat;
        let aht = self.a.transpose() * h;
        let mut q = self.a.transpose() * hmat * &self.a + jb.transpose() * &s * &jb;
        for i in 0..=m {
            q[(m, i)] += aht[i];
            q[(i, m)] += aht[i];
        }
        let q = linalg::sym(&q);

        let (f, w, grad_u) = match &self.z {
            ZSet::Special => {
                let z = augment(u);
                let q11 = q.view((0, 0), (m, m)).into_owned();
                let qv = q.view((0, m), (m, 1)).column(0).into_owned();
                let (lam, v) = linalg::top_eigenpair(&q11);
                let lam_p = lam.max(0.0);
                let diff = u - &self.ball_c;
                let slack = (self.ball_r2 - diff.norm_squared()).max(0.0);
                let f = z.dot(&(&q * &z)) + lam_p * slack;
                let mut w = &z * z.transpose();
                if lam_p > 0.0 && slack > 0.0 {
                    let vv = &v * v.transpose() * slack;
                    let mut blk = w.view_mut((0, 0), (m, m));
                    blk += vv;
                }
                let grad_u = &q11 * u + qv - diff * lam_p;
                (f, w, grad_u)
            }
            ZSet::Oracle(o) => {
                let (f, w) = o.support(&q)?;
                (f, linalg::sym(&w), Vector::zeros(m))
            }
        };
        let gamma_term = 0.5 * f;

        let y = &self.b_mat * &w * self.b_mat.transpose();
        let sjy = &s * &jmat * &y;
        let awa = &self.a * &w * self.a.transpose();
        let awb = &self.a * w.column(m);
        let grad_h = awb + sjy.column(d);
        let g_gamma = linalg::sym(&(awa + &s * &jmat * &y * jmat.transpose() * &s + sjy.columns(0, d) * 2.0)) * 0.5;
        let grad_hmat = &s * 0.5 + &dtheta * 0.5 + &self.theta_star * hmat * &self.theta_star * (2.0 * self.coef) + g_gamma;

        Ok(LiftedEval {
            value: logdet_term + tr_term + frob_term + gamma_term,
            grad_h,
            grad_hmat: linalg::sym(&grad_hmat),
            grad_theta: hmat * 0.5,
            grad_u,
        })
    }

    /// `Φ(h, H; Θ) = max_u Φ̃(h, H; Θ, u)`.
    fn phi(&self, h: &Vector, hmat: &Matrix, theta: &Matrix, u_set: &ConvexSet) -> Result<f64> {
        if let ZSet::Oracle(_) = self.z {
            return Ok(self.eval(h, hmat, theta, &u_set.anchor())?.value);
        }
        let res = spg_maximize(
            |u| {
                let e = self.eval(h, hmat, theta, u)?;
                Ok((e.value, e.grad_u))
            },
            |u| u_set.project(u),
            &u_set.anchor(),
            &SpgOptions { max_iter: 10_000, tol: 1e-12, memory: 10 },
        )?;
        Ok(res.f)
    }
}

#[derive(Debug)]
struct LiftedGaussianPhi {
    core: LiftedCore,
    frame: LiftFrame,
}

impl PhiOracle for LiftedGaussianPhi {
    fn obs_dim(&self) -> usize {
        self.core.d + self.core.d * self.core.d
    }

    fn param_dim(&self) -> usize {
        self.core.d * self.core.d + self.core.m
    }

    fn eval(&self, x: &Vector, mu: &Vector) -> Result<PhiEval> {
        let d = self.core.d;
        let (h, hmat) = self.frame.decode(x);
        let theta = linalg::sym(&linalg::mat_of(&mu.as_slice()[..d * d], d));
        let u = linalg::block(mu, d * d, self.core.m);
        let e = self.core.eval(&h, &hmat, &theta, &u)?;
        let gt = &self.frame.r_inv * &e.grad_hmat * &self.frame.r_inv;
        Ok(PhiEval {
            value: e.value,
            grad_h: linalg::concat(&[&e.grad_h, &linalg::vec_of(&gt)]),
            grad_mu: linalg::concat(&[&linalg::vec_of(&e.grad_theta), &e.grad_u]),
        })
    }
}

/// Lifted regular data on a given frame; `μ = [vec Θ; u] ∈ 𝒰 × U`.
pub fn lift_gaussian_on(spec: &QuadLiftSpec, frame: &LiftFrame) -> Result<RegularData> {
    check_dim("frame dimension", spec.obs_dim(), frame.dim())?;
    if frame.gamma() > spec.gamma + 1e-15 {
        return Err(Error::InvalidArgument("frame band exceeds the spec's γ".into()));
    }
    let w = linalg::inv_sqrtm_pd(frame.theta_ref())?;
    if linalg::max_eigenvalue(&(&w * &spec.theta_star * &w)) > 1.0 + 1e-9 {
        return Err(Error::InvalidArgument("frame reference matrix does not dominate Θ*".into()));
    }
    let core = LiftedCore::new(spec)?;
    let m_set = ConvexSet::product(vec![spec.ucov.clone(), spec.u.clone()])?;
    let phi = LiftedGaussianPhi { core, frame: frame.clone() };
    RegularData::new(frame.set().clone(), m_set, Arc::new(phi), FamilyKind::LiftedGaussian)
}

/// Lifted regular data over `H_γ` of the spec's own `Θ*`.
pub fn lift_gaussian(spec: &QuadLiftSpec) -> Result<RegularData> {
    let frame = LiftFrame::new(&spec.theta_star, spec.gamma, LiftMode::Full)?;
    lift_gaussian_on(spec, &frame)
}

/// `Φ(h, H; Θ)` with `Γ_𝒵` evaluated in full.
pub fn lifted_phi(spec: &QuadLiftSpec, h: &Vector, hmat: &Matrix, theta: &Matrix) -> Result<f64> {
    let d = spec.obs_dim();
    check_dim("h", d, h.len())?;
    check_dim("H", d, hmat.nrows())?;
    let r = linalg::sqrtm_psd(&spec.theta_star);
    let ht = &r * linalg::sym(hmat) * &r;
    if linalg::eigh(&ht).eigenvalues.iter().any(|l| l.abs() > spec.gamma + 1e-12) {
        return Err(Error::Domain("H outside H_γ".into()));
    }
    LiftedCore::new(spec)?.phi(h, &linalg::sym(hmat), &linalg::sym(theta), &spec.u)
}

/// `φ(ζ) = hᵀζ + ½ζᵀHζ + a`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadDetector {
    pub h: Vector,
    pub hmat: Matrix,
    pub a: f64,
    pub risk: f64,
    pub gap: f64,
    pub certified: bool,
}

impl QuadDetector {
    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn eval(&self, zeta: &Vector) -> f64 {
        self.h.dot(zeta) + 0.5 * zeta.dot(&(&self.hmat * zeta)) + self.a
    }

    /// Eigenvalues of `Θ*^{1/2}HΘ*^{1/2}` within `[−γ, γ]`.
    pub fn in_band(&self, theta_star: &Matrix, gamma: f64, tol: f64) -> bool {
        let r = linalg::sqrtm_psd(theta_star);
        linalg::eigh(&(&r * &self.hmat * &r))
            .eigenvalues
            .iter()
            .all(|l| l.abs() <= gamma + tol)
    }

    pub fn from_affine(det: &AffineDetector) -> Self {
        let d = det.dim();
        Self {
            h: det.h.clone(),
            hmat: Matrix::zeros(d, d),
            a: det.a,
            risk: det.risk,
            gap: det.gap,
            certified: det.certified,
        }
    }
}

/// Quadratic detector restricted to `mode`.
pub fn solve_quad_detector_mode(s1: &QuadLiftSpec, s2: &QuadLiftSpec, mode: LiftMode, options: &SolverOptions) -> Result<QuadDetector> {
    let frame = LiftFrame::for_pair(s1, s2, mode)?;
    let d1 = lift_gaussian_on(s1, &frame)?;
    let d2 = lift_gaussian_on(s2, &frame)?;
    let problem = SaddleProblem::new(d1, d2)?.with_options(options.clone());
    let sol = solve_saddle(&problem)?;
    let det = build_detector(&sol, &problem, false)?;
    let (h, hmat) = frame.decode(&det.h);
    Ok(QuadDetector { h, hmat, a: det.a, risk: det.risk, gap: det.gap, certified: det.certified })
}

/// The lower-risk of the full quadratic detector and the `H = 0` detector.
pub fn solve_quad_detector(s1: &QuadLiftSpec, s2: &QuadLiftSpec, options: &SolverOptions) -> Result<QuadDetector> {
    let full = solve_quad_detector_mode(s1, s2, LiftMode::Full, options)?;
    let affine = solve_quad_detector_mode(s1, s2, LiftMode::AffineOnly, options)?;
    Ok(if affine.risk < full.risk { affine } else { full })
}

#[derive(Debug)]
struct AffineMeanPhi {
    a: Matrix,
    theta_star: Matrix,
}

impl PhiOracle for AffineMeanPhi {
    fn obs_dim(&self) -> usize {
        self.a.nrows()
    }

    fn param_dim(&self) -> usize {
        self.a.ncols() - 1
    }

    fn eval(&self, h: &Vector, u: &Vector) -> Result<PhiEval> {
        let mean = &self.a * augment(u);
        let th = &self.theta_star * h;
        let m = u.len();
        let grad_mu = self.a.columns(0, m).transpose() * h;
        Ok(PhiEval { value: h.dot(&mean) + 0.5 * h.dot(&th), grad_h: mean + th, grad_mu })
    }
}

/// Affine detector of `min_h max_{u₁,u₂} ½[½hᵀΘ*₁h + ½hᵀΘ*₂h + hᵀ(A₂[u₂;1] − A₁[u₁;1])]`.
pub fn special_case_affine(s1: &QuadLiftSpec, s2: &QuadLiftSpec, options: &SolverOptions) -> Result<AffineDetector> {
    check_dim("observation dimension of the pair", s1.obs_dim(), s2.obs_dim())?;
    for s in [s1, s2] {
        if !matches!(s.z, ZSet::Special) {
            return Err(Error::InvalidArgument("the affine reduction needs the special-case 𝒵".into()));
        }
    }
    let h_set = ConvexSet::full(s1.obs_dim());
    let mk = |s: &QuadLiftSpec| {
        let phi = AffineMeanPhi { a: s.a.clone(), theta_star: s.theta_star.clone() };
        RegularData::new(h_set.clone(), s.u.clone(), Arc::new(phi), FamilyKind::LiftedGaussian)
    };
    let problem = SaddleProblem::new(mk(s1)?, mk(s2)?)?.with_options(options.clone());
    let sol = solve_saddle(&problem)?;
    build_detector(&sol, &problem, false)
}

#[derive(Debug)]
struct XPlusSet {
    n: usize,
    feasible: ConvexSet,
    oracle: Arc<dyn MatrixSupport>,
    radius: f64,
}

impl SetOracle for XPlusSet {
    fn dim(&self) -> usize {
        self.n * self.n
    }

    fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.feasible.contains(x, tol)
    }

    fn project(&self, x: &Vector) -> Vector {
        self.feasible.project(x)
    }

    fn support(&self, g: &Vector) -> Option<(f64, Vector)> {
        let w = linalg::sym(&linalg::mat_of(g.as_slice(), self.n));
        self.oracle.support(&w).ok().map(|(v, z)| (v, linalg::vec_of(&z)))
    }

    fn bound_radius(&self) -> Option<f64> {
        Some(self.radius)
    }
}

/// Lifted regular data for observations supported on
/// `{ζ : [ζ;1]ᵀQ_ℓ[ζ;1] ≤ 0}`: bounded-support data on
/// `X⁺ = {Z ⪰ 0, Z_{d+1,d+1} = 1, Tr(Q_ℓZ) ≤ 0}`, refined with the ball of
/// radius `g_radius`. Evaluating `φ_{X⁺}` is delegated to `support`.
pub fn lift_bounded_support(support: Option<Arc<dyn MatrixSupport>>, constraints: &[Matrix], g_radius: f64) -> Result<RegularData> {
    let oracle = support.ok_or_else(|| Error::Capability("lifted bounded-support data needs a support-function oracle for X⁺".into()))?;
    let n = oracle.size();
    if n < 2 {
        return Err(Error::InvalidArgument("lifted matrices must be at least 2×2".into()));
    }
    if !(g_radius >= 0.0) {
        return Err(Error::InvalidArgument("refinement radius must be nonnegative".into()));
    }
    let mut q0 = Matrix::zeros(n, n);
    q0[(n - 1, n - 1)] = 1.0;
    let mut parts = vec![ConvexSet::psd_cone(n), ConvexSet::hyperplane(linalg::vec_of(&q0), 1.0)?];
    for q in constraints {
        check_dim("constraint matrix", n, q.nrows())?;
        parts.push(ConvexSet::halfspace(HalfSpace::new(linalg::vec_of(&linalg::sym(q)), 0.0)));
    }
    let feasible = ConvexSet::intersection(parts)?;
    let (trace_bound, _) = oracle.support(&Matrix::identity(n, n))?;
    if !trace_bound.is_finite() {
        return Err(Error::InvalidArgument("X⁺ is unbounded".into()));
    }
    let x = ConvexSet::custom(Arc::new(XPlusSet { n, feasible, oracle, radius: trace_bound.max(0.0) }));
    let base = bounded_support_family(x.clone(), x.clone())?;
    let g = ConvexSet::ball(Vector::zeros(n * n), g_radius)?;
    let refined = refine_with_support(base, x, g)?;
    RegularData::new(
        refined.h_set().clone(),
        refined.m_set().clone(),
        refined.oracle().clone(),
        FamilyKind::LiftedBoundedSupport,
    )
}

/// `(ζ, Z(ζ))` for `ζ` in the unit ball with `‖Z(ζ)‖ ≤ 1`: sub-Gaussian with
/// `Θ = 2I`, mean in `U`.
pub fn lift_subgaussian_cover(u: ConvexSet) -> Result<RegularData> {
    let n = u.dim();
    let cov = ConvexSet::singleton(linalg::vec_of(&(Matrix::identity(n, n) * 2.0)));
    sub_gaussian_family(ConvexSet::product(vec![u, cov])?)
}
