//! Regular data `(H, M, Φ)`: the basic families and the calculus
//! combinators that build new regular data from old.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::optim::{spg_minimize, SpgOptions};
use crate::sets::ConvexSet;

/// Value of `Φ(h; μ)` with a subgradient in `h` and a supergradient in `μ`.
#[derive(Clone, Debug)]
pub struct PhiEval {
    pub value: f64,
    pub grad_h: Vector,
    pub grad_mu: Vector,
}

/// Oracle for a function convex in `h` and concave in `μ`.
pub trait PhiOracle: fmt::Debug + Send + Sync {
    fn obs_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn eval(&self, h: &Vector, mu: &Vector) -> Result<PhiEval>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    SubGaussian,
    Poisson,
    Discrete,
    BoundedSupport,
    DirectSum,
    IidScale,
    SemiDirectSum,
    AffineImage,
    SupportRefined,
    LiftedGaussian,
    LiftedBoundedSupport,
    Custom,
}

/// The four hypothesis kinds for `K`-repeated observations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HypothesisKind {
    /// Driving factors with conditional laws in the family.
    R,
    /// As `R`, with the parameter fixed along the trajectory.
    S,
    RStationary,
    SStationary,
}

impl HypothesisKind {
    pub const ALL: [HypothesisKind; 4] = [
        HypothesisKind::R,
        HypothesisKind::S,
        HypothesisKind::RStationary,
        HypothesisKind::SStationary,
    ];
}

/// Regular data `(H, M, Φ)`.
#[derive(Clone, Debug)]
pub struct RegularData {
    h_set: ConvexSet,
    m_set: ConvexSet,
    phi: Arc<dyn PhiOracle>,
    kind: FamilyKind,
}

impl RegularData {
    pub fn new(h_set: ConvexSet, m_set: ConvexSet, phi: Arc<dyn PhiOracle>, kind: FamilyKind) -> Result<Self> {
        check_dim("H vs Φ observation dimension", phi.obs_dim(), h_set.dim())?;
        check_dim("M vs Φ parameter dimension", phi.param_dim(), m_set.dim())?;
        Ok(Self { h_set, m_set, phi, kind })
    }

    pub fn h_set(&self) -> &ConvexSet {
        &self.h_set
    }

    pub fn m_set(&self) -> &ConvexSet {
        &self.m_set
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn oracle(&self) -> &Arc<dyn PhiOracle> {
        &self.phi
    }

    pub fn obs_dim(&self) -> usize {
        self.h_set.dim()
    }

    pub fn param_dim(&self) -> usize {
        self.m_set.dim()
    }

    pub fn eval(&self, h: &Vector, mu: &Vector) -> Result<PhiEval> {
        check_dim("Φ argument h", self.obs_dim(), h.len())?;
        check_dim("Φ argument μ", self.param_dim(), mu.len())?;
        self.phi.eval(h, mu)
    }

    pub fn phi(&self, h: &Vector, mu: &Vector) -> Result<f64> {
        Ok(self.eval(h, mu)?.value)
    }

    /// Same `H` and `Φ`, smaller parameter set.
    pub fn restrict(&self, m_set: ConvexSet) -> Result<Self> {
        check_dim("restricted parameter set", self.param_dim(), m_set.dim())?;
        Ok(Self {
            h_set: self.h_set.clone(),
            m_set,
            phi: self.phi.clone(),
            kind: self.kind,
        })
    }

    /// Same `M` and `Φ`, different `H` of the same dimension.
    pub fn with_h_set(&self, h_set: ConvexSet) -> Result<Self> {
        check_dim("replacement H", self.obs_dim(), h_set.dim())?;
        Ok(Self {
            h_set,
            m_set: self.m_set.clone(),
            phi: self.phi.clone(),
            kind: self.kind,
        })
    }
}

fn validation_samples(m: &ConvexSet, count: usize) -> Vec<Vector> {
    if let Some(p) = m.as_singleton() {
        return vec![p.clone()];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut out = vec![m.anchor()];
    out.extend((0..count).map(|_| m.sample(&mut rng)));
    out
}

// ---------------------------------------------------------------------------
// sub-Gaussian

#[derive(Debug)]
struct SubGaussianPhi {
    d: usize,
}

impl PhiOracle for SubGaussianPhi {
    fn obs_dim(&self) -> usize {
        self.d
    }
    fn param_dim(&self) -> usize {
        self.d + self.d * self.d
    }
    fn eval(&self, h: &Vector, mu: &Vector) -> Result<PhiEval> {
        let d = self.d;
        let theta = linalg::block(mu, 0, d);
        let cov = linalg::mat_of(&mu.as_slice()[d..], d);
        let ch = &cov * h;
        let cth = cov.transpose() * h;
        let value = theta.dot(h) + 0.5 * h.dot(&ch);
        let grad_h = &theta + (ch + cth) * 0.5;
        let outer = h * h.transpose() * 0.5;
        let grad_mu = linalg::concat(&[h, &linalg::vec_of(&outer)]);
        Ok(PhiEval { value, grad_h, grad_mu })
    }
}

/// Parameter vector `[θ; vec Θ]` of the sub-Gaussian family.
pub fn sub_gaussian_params(theta: &Vector, cov: &Matrix) -> Vector {
    linalg::concat(&[theta, &linalg::vec_of(cov)])
}

/// `U × 𝒰` as a parameter set for [`sub_gaussian_family`].
pub fn gaussian_param_set(means: ConvexSet, covs: ConvexSet) -> Result<ConvexSet> {
    let d = means.dim();
    if covs.dim() != d * d {
        return Err(Error::DimensionMismatch {
            context: "covariance set".into(),
            expected: d * d,
            got: covs.dim(),
        });
    }
    ConvexSet::product(vec![means, covs])
}

/// `Φ(h; θ, Θ) = θᵀh + ½hᵀΘh` on `H = ℝ^d`; `M` lives in `ℝ^{d+d²}`.
pub fn sub_gaussian_family(m: ConvexSet) -> Result<RegularData> {
    let d = linalg::split_dim(m.dim()).ok_or_else(|| {
        Error::InvalidArgument(format!("parameter dimension {} is not d + d²", m.dim()))
    })?;
    for mu in validation_samples(&m, 32) {
        let cov = linalg::mat_of(&mu.as_slice()[d..], d);
        if !linalg::is_psd(&cov, 1e-9) {
            return Err(Error::InvalidParameter(
                "covariance component of M is not positive semidefinite".into(),
            ));
        }
    }
    RegularData::new(ConvexSet::full(d), m, Arc::new(SubGaussianPhi { d }), FamilyKind::SubGaussian)
}

// ---------------------------------------------------------------------------
// Poisson

#[derive(Debug)]
struct PoissonPhi {
    d: usize,
}

impl PhiOracle for PoissonPhi {
    fn obs_dim(&self) -> usize {
        self.d
    }
    fn param_dim(&self) -> usize {
        self.d
    }
    fn eval(&self, h: &Vector, mu: &Vector) -> Result<PhiEval> {
        let eh = h.map(f64::exp);
        let em1 = h.map(f64::exp_m1);
        let value = mu.dot(&em1);
        let grad_h = mu.component_mul(&eh);
        Ok(PhiEval { value, grad_h, grad_mu: em1 })
    }
}

/// `Φ(h; μ) = Σ μᵢ(e^{hᵢ} − 1)`.
pub fn poisson_family(m: ConvexSet) -> Result<RegularData> {
    for mu in validation_samples(&m, 32) {
        if mu.iter().any(|&v| v < -1e-12) {
            return Err(Error::InvalidParameter("negative Poisson rate in M".into()));
        }
    }
    let d = m.dim();
    RegularData::new(ConvexSet::full(d), m, Arc::new(PoissonPhi { d }), FamilyKind::Poisson)
}

// ---------------------------------------------------------------------------
// discrete

#[derive(Debug)]
struct DiscretePhi {
    d: usize,
}

impl PhiOracle for DiscretePhi {
    fn obs_dim(&self) -> usize {
        self.d
    }
    fn param_dim(&self) -> usize {
        self.d
    }
    fn eval(&self, h: &Vector, mu: &Vector) -> Result<PhiEval> {
        let mu = mu.map(|v| v.max(0.0));
        let value = linalg::log_sum_exp(&mu, h);
        if !value.is_finite() {
            return Err(Error::Domain("discrete Φ evaluated at a zero weight vector".into()));
        }
        let grad_mu = h.map(|x| (x - value).exp());
        let grad_h = mu.component_mul(&grad_mu);
        Ok(PhiEval { value, grad_h, grad_mu })
    }
}

/// `Φ(h; μ) = ln Σ μᵢ e^{hᵢ}` on `M ⊆ Δ_d`.
pub fn discrete_family(m: ConvexSet) -> Result<RegularData> {
    for mu in validation_samples(&m, 32) {
        if (mu.sum() - 1.0).abs() > 1e-9 || mu.iter().any(|&v| v < -1e-12) {
            return Err(Error::InvalidParameter("M is not contained in the probability simplex".into()));
        }
    }
    let d = m.dim();
    RegularData::new(ConvexSet::full(d), m, Arc::new(DiscretePhi { d }), FamilyKind::Discrete)
}

// ---------------------------------------------------------------------------
// bounded support

#[derive(Debug)]
struct BoundedSupportPhi {
    x: ConvexSet,
}

impl PhiOracle for BoundedSupportPhi {
    fn obs_dim(&self) -> usize {
        self.x.dim()
    }
    fn param_dim(&self) -> usize {
        self.x.dim()
    }
    fn eval(&self, h: &Vector, mu: &Vector) -> Result<PhiEval> {
        let (sp, xp) = self
            .x
            .support(h)
            .ok_or_else(|| Error::Capability("support function of X".into()))?;
        let (sm, xm) = self
            .x
            .support(&-h)
            .ok_or_else(|| Error::Capability("support function of X".into()))?;
        let w = sp + sm;
        let value = h.dot(mu) + 0.125 * w * w;
        let grad_h = mu + (xp - xm) * (0.25 * w);
        Ok(PhiEval { value, grad_h, grad_mu: h.clone() })
    }
}

/// `Φ(h; μ) = hᵀμ + ⅛[φ_X(h) + φ_X(−h)]²` for distributions supported on the
/// compact set `X` with mean in `M`.
pub fn bounded_support_family(x: ConvexSet, m: ConvexSet) -> Result<RegularData> {
    check_dim("bounded support M", x.dim(), m.dim())?;
    if !x.has_support() {
        return Err(Error::Capability("bounded-support family needs the support function of X".into()));
    }
    if x.bound_radius().is_none() {
        return Err(Error::InvalidArgument("support set X must be bounded".into()));
    }
    let d = x.dim();
    RegularData::new(ConvexSet::full(d), m, Arc::new(BoundedSupportPhi { x }), FamilyKind::BoundedSupport)
}

// ---------------------------------------------------------------------------
// direct sum

#[derive(Debug)]
struct DirectSumPhi {
    parts: Vec<RegularData>,
}

impl PhiOracle for DirectSumPhi {
    fn obs_dim(&self) -> usize {
        self.parts.iter().map(|p| p.obs_dim()).sum()
    }
    fn param_dim(&self) -> usize {
        self.parts.iter().map(|p| p.param_dim()).sum()
    }
    fn eval(&self, h: &Vector, mu: &Vector) -> Result<PhiEval> {
        let mut value = 0.0;
        let mut grad_h = Vector::zeros(h.len());
        let mut grad_mu = Vector::zeros(mu.len());
        let (mut kh, mut km) = (0, 0);
        for p in &self.parts {
            let (dh, dm) = (p.obs_dim(), p.param_dim());
            let e = p.eval(&linalg::block(h, kh, dh), &linalg::block(mu, km, dm))?;
            value += e.value;
            grad_h.rows_mut(kh, dh).copy_from(&e.grad_h);
            grad_mu.rows_mut(km, dm).copy_from(&e.grad_mu);
            kh += dh;
            km += dm;
        }
        Ok(PhiEval { value, grad_h, grad_mu })
    }
}

/// Product-type observations: block-separable `Φ`.
pub fn direct_sum(parts: Vec<RegularData>) -> Result<RegularData> {
    if parts.is_empty() {
        return Err(Error::InvalidArgument("direct sum of an empty list".into()));
    }
    let h = ConvexSet::product(parts.iter().map(|p| p.h_set().clone()).collect())?;
    let m = ConvexSet::product(parts.iter().map(|p| p.m_set().clone()).collect())?;
    RegularData::new(h, m, Arc::new(DirectSumPhi { parts }), FamilyKind::DirectSum)
}

// ---------------------------------------------------------------------------
// IID scaling

#[derive(Debug)]
struct IidScalePhi {
    base: RegularData,
    lambda: Vec<f64>,
}

impl PhiOracle for IidScalePhi {
    fn obs_dim(&self) -> usize {
        self.base.obs_dim()
    }
    fn param_dim(&self) -> usize {
        self.base.param_dim()
    }
    fn eval(&self, h: &Vector, mu: &Vector) -> Result<PhiEval> {
        let mut value = 0.0;
        let mut grad_h = Vector::zeros(h.len());
        let mut grad_mu = Vector::zeros(mu.len());
        for &l in &self.lambda {
            let e = self.base.eval(&(h * l), mu)?;
            value += e.value;
            grad_h += e.grad_h * l;
            grad_mu += e.grad_mu;
        }
        Ok(PhiEval { value, grad_h, grad_mu })
    }
}

/// Distribution of `Σ λ_ℓ ω_ℓ` for independent `ω_ℓ` sharing the parameter.
pub fn iid_scale(data: RegularData, lambda: Vec<f64>) -> Result<RegularData> {
    if lambda.is_empty() {
        return Err(Error::InvalidArgument("iid_scale needs at least one weight".into()));
    }
    let linf = lambda.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
    let h = ConvexSet::scaled(data.h_set().clone(), linf)?;
    let m = data.m_set().clone();
    RegularData::new(h, m, Arc::new(IidScalePhi { base: data, lambda }), FamilyKind::IidScale)
}

// ---------------------------------------------------------------------------
// semi-direct sum

#[derive(Debug)]
struct SemiDirectPhi {
    parts: Vec<RegularData>,
    simplex: ConvexSet,
}

impl SemiDirectPhi {
    /// `Σ λ_ℓ Φ_ℓ(h^ℓ/λ_ℓ; μ^ℓ)` with gradient in λ and the per-part evaluations.
    fn inner(&self, lam: &Vector, h: &Vector, mu: &Vector) -> Result<(f64, Vector, Vec<PhiEval>)> {
        let mut value = 0.0;
        let mut grad = Vector::zeros(lam.len());
        let mut evals = Vec::with_capacity(self.parts.len());
        let (mut kh, mut km) = (0, 0);
        for (l, p) in self.parts.iter().enumerate() {
            let (dh, dm) = (p.obs_dim(), p.param_dim());
            let hl = linalg::block(h, kh, dh);
            let arg = &hl / lam[l];
            let e = p.eval(&arg, &linalg::block(mu, km, dm))?;
            value += lam[l] * e.value;
            grad[l] = e.value - e.grad_h.dot(&arg);
            evals.push(e);
            kh += dh;
            km += dm;
        }
        Ok((value, grad, evals))
    }
}

impl PhiOracle for SemiDirectPhi {
    fn obs_dim(&self) -> usize {
        self.parts.iter().map(|p| p.obs_dim()).sum()
    }
    fn param_dim(&self) -> usize {
        self.parts.iter().map(|p| p.param_dim()).sum()
    }
    fn eval(&self, h: &Vector, mu: &Vector) -> Result<PhiEval> {
        let l = self.parts.len();
        let start = Vector::from_element(l, 1.0 / l as f64);
        let opts = SpgOptions { max_iter: 2_000, tol: 1e-12, memory: 10 };
        let res = spg_minimize(
            |lam| {
                let (v, g, _) = self.inner(lam, h, mu)?;
                Ok((v, g))
            },
            |x| self.simplex.project(x),
            &start,
            &opts,
        )?;
        let (value, _, evals) = self.inner(&res.x, h, mu)?;
        let scale = value.abs().max(1.0);
        if !res.converged && res.pg_norm > 1e-6 * scale {
            return Err(Error::NonConvergence {
                context: "semi-direct sum inner minimisation".into(),
                iterations: res.iterations,
                residual: res.pg_norm,
            });
        }
        let mut grad_h = Vector::zeros(h.len());
        let mut grad_mu = Vector::zeros(mu.len());
        let (mut kh, mut km) = (0, 0);
        for ((lval, p), e) in res.x.iter().zip(&self.parts).zip(evals) {
            let (dh, dm) = (p.obs_dim(), p.param_dim());
            grad_h.rows_mut(kh, dh).copy_from(&e.grad_h);
            grad_mu.rows_mut(km, dm).copy_from(&(e.grad_mu * *lval));
            kh += dh;
            km += dm;
        }
        Ok(PhiEval { value, grad_h, grad_mu })
    }
}

/// Default truncation level `min(10⁻³, 1/(2L))`.
pub fn default_semi_direct_eps(l: usize) -> f64 {
    (1e-3_f64).min(0.5 / l as f64)
}

/// Semi-direct sum: the infimum over `λ ∈ Δ^ε` of `Σ λ_ℓ Φ_ℓ(h^ℓ/λ_ℓ; μ^ℓ)`.
pub fn semi_direct_sum(parts: Vec<RegularData>, eps: f64) -> Result<RegularData> {
    let l = parts.len();
    if l == 0 {
        return Err(Error::InvalidArgument("semi-direct sum of an empty list".into()));
    }
    if !(eps > 0.0) || l as f64 * eps >= 1.0 {
        return Err(Error::InvalidArgument(format!("semi-direct sum needs ε > 0 and Lε < 1 (L={l}, ε={eps})")));
    }
    for (i, p) in parts.iter().enumerate() {
        if !p.h_set().is_full() {
            return Err(Error::InvalidArgument(format!("part {i} of a semi-direct sum must have H = ℝ^d")));
        }
        if p.m_set().bound_radius().is_none() {
            return Err(Error::InvalidArgument(format!("part {i} of a semi-direct sum must have bounded M")));
        }
    }
    let dh = parts.iter().map(|p| p.obs_dim()).sum();
    let m = ConvexSet::product(parts.iter().map(|p| p.m_set().clone()).collect())?;
    let simplex = ConvexSet::truncated_simplex(l, eps)?;
    RegularData::new(
        ConvexSet::full(dh),
        m,
        Arc::new(SemiDirectPhi { parts, simplex }),
        FamilyKind::SemiDirectSum,
    )
}

// ---------------------------------------------------------------------------
// affine image

#[derive(Debug)]
struct AffineImagePhi {
    base: RegularData,
    a: Matrix,
    shift: Vector,
}

impl PhiOracle for AffineImagePhi {
    fn obs_dim(&self) -> usize {
        self.a.nrows()
    }
    fn param_dim(&self) -> usize {
        self.base.param_dim()
    }
    fn eval(&self, h: &Vector, mu: &Vector) -> Result<PhiEval> {
        let e = self.base.eval(&(self.a.transpose() * h), mu)?;
        Ok(PhiEval {
            value: e.value + self.shift.dot(h),
            grad_h: &self.a * e.grad_h + &self.shift,
            grad_mu: e.grad_mu,
        })
    }
}

/// Image of the observation under `ω ↦ Aω + a`, with `A` of size `d̄ × d`.
pub fn affine_image(data: RegularData, a: Matrix, shift: Vector) -> Result<RegularData> {
    check_dim("affine image columns", data.obs_dim(), a.ncols())?;
    check_dim("affine image shift", a.nrows(), shift.len())?;
    let h = ConvexSet::preimage(data.h_set().clone(), a.transpose())?;
    let m = data.m_set().clone();
    RegularData::new(h, m, Arc::new(AffineImagePhi { base: data, a, shift }), FamilyKind::AffineImage)
}

// ---------------------------------------------------------------------------
// support refinement

#[derive(Debug)]
struct RefinedPhi {
    base: RegularData,
    x: ConvexSet,
    g: ConvexSet,
}

impl RefinedPhi {
    fn objective(&self, h: &Vector, mu: &Vector, g: &Vector) -> Result<(f64, Vector, PhiEval)> {
        let e = self.base.eval(&(h - g), mu)?;
        let (s, xs) = self
            .x
            .support(g)
            .ok_or_else(|| Error::Capability("support function of X".into()))?;
        let grad = xs - &e.grad_h;
        Ok((e.value + s, grad, e))
    }
}

impl PhiOracle for RefinedPhi {
    fn obs_dim(&self) -> usize {
        self.base.obs_dim()
    }
    fn param_dim(&self) -> usize {
        self.base.param_dim()
    }
    fn eval(&self, h: &Vector, mu: &Vector) -> Result<PhiEval> {
        let zero = self.g.project(&Vector::zeros(h.len()));
        let mut best_g = zero.clone();
        let mut best = self.objective(h, mu, &zero)?;
        let ph = self.g.project(h);
        let cand = self.objective(h, mu, &ph)?;
        if cand.0 < best.0 {
            best = cand;
            best_g = ph;
        }
        let opts = SpgOptions { max_iter: 500, tol: 1e-10, memory: 10 };
        let res = spg_minimize(
            |g| {
                let (v, gr, _) = self.objective(h, mu, g)?;
                Ok((v, gr))
            },
            |g| self.g.project(g),
            &best_g,
            &opts,
        )?;
        if res.f < best.0 {
            best = self.objective(h, mu, &res.x)?;
        }
        let (value, _, e) = best;
        if !value.is_finite() {
            return Err(Error::NonConvergence {
                context: "support refinement inner minimisation".into(),
                iterations: res.iterations,
                residual: f64::INFINITY,
            });
        }
        Ok(PhiEval { value, grad_h: e.grad_h, grad_mu: e.grad_mu })
    }
}

/// `Φ̂(h; μ) = inf_{g∈G} [Φ(h − g; μ) + φ_X(g)]` for observations known to
/// take values in `X`.
///
/// The inner minimum is approximated from above by a feasible `g`, so the
/// returned value is always a valid bound.
pub fn refine_with_support(data: RegularData, x: ConvexSet, g: ConvexSet) -> Result<RegularData> {
    if !data.h_set().is_full() {
        return Err(Error::InvalidArgument("support refinement needs H = ℝ^d".into()));
    }
    check_dim("support set X", data.obs_dim(), x.dim())?;
    check_dim("refinement set G", data.obs_dim(), g.dim())?;
    if g.bound_radius().is_none() {
        return Err(Error::InvalidArgument("refinement set G must be compact".into()));
    }
    if !x.has_support() {
        return Err(Error::Capability("refinement needs the support function of X".into()));
    }
    if !g.contains(&Vector::zeros(g.dim()), 1e-12) {
        return Err(Error::InvalidArgument("refinement set G must contain the origin".into()));
    }
    let h = data.h_set().clone();
    let m = data.m_set().clone();
    RegularData::new(h, m, Arc::new(RefinedPhi { base: data, x, g }), FamilyKind::SupportRefined)
}

/// Wrap a user oracle as regular data.
pub fn custom_family(h_set: ConvexSet, m_set: ConvexSet, phi: Arc<dyn PhiOracle>) -> Result<RegularData> {
    RegularData::new(h_set, m_set, phi, FamilyKind::Custom)
}
