//! Convex sets represented by oracles: membership, Euclidean projection and
//! (when cheap) the support function `g ↦ max_{x∈X} gᵀx` with a maximiser.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// User-supplied set oracle.
pub trait SetOracle: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn contains(&self, x: &Vector, tol: f64) -> bool;
    fn project(&self, x: &Vector) -> Vector;
    fn support(&self, _g: &Vector) -> Option<(f64, Vector)> {
        None
    }
    fn bound_radius(&self) -> Option<f64> {
        None
    }
}

/// Closed half-space `{x : aᵀx ≤ b}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfSpace {
    pub a: Vector,
    pub b: f64,
}

impl HalfSpace {
    pub fn new(a: Vector, b: f64) -> Self {
        Self { a, b }
    }

    pub fn violation(&self, x: &Vector) -> f64 {
        let n = self.a.norm();
        if n == 0.0 {
            return (-self.b).max(0.0);
        }
        ((self.a.dot(x) - self.b) / n).max(0.0)
    }

    pub fn project(&self, x: &Vector) -> Vector {
        let s = self.a.dot(x) - self.b;
        let nn = self.a.norm_squared();
        if s <= 0.0 || nn == 0.0 {
            x.clone()
        } else {
            x - &self.a * (s / nn)
        }
    }
}

#[derive(Debug)]
enum Shape {
    Full,
    Singleton(Vector),
    Cuboid { lo: Vector, hi: Vector },
    Ball { center: Vector, radius: f64 },
    /// `{x : Σx = 1, lo ≤ x ≤ hi}`
    Simplex { lo: Vector, hi: Vector },
    HalfSpace(HalfSpace),
    /// `{x : aᵀx = b}`
    Hyperplane { a: Vector, b: f64 },
    Product(Vec<ConvexSet>),
    Intersection(Vec<ConvexSet>),
    /// Flattened symmetric matrices with `lo ⪯ X ⪯ hi`.
    PsdInterval { lo: Matrix, hi: Matrix },
    PsdCone { n: usize },
    /// `{x : c·x ∈ inner}`, `c > 0`.
    Scaled { inner: ConvexSet, factor: f64 },
    /// `{y : A y ∈ inner}`.
    Preimage { inner: ConvexSet, map: Matrix },
    Custom(Arc<dyn SetOracle>),
}

/// A closed convex set in `ℝ^dim`, cheap to clone.
#[derive(Clone)]
pub struct ConvexSet {
    dim: usize,
    shape: Arc<Shape>,
}

impl fmt::Debug for ConvexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConvexSet(dim={}, {:?})", self.dim, self.shape)
    }
}

const DYKSTRA_SWEEPS: usize = 20_000;

impl ConvexSet {
    fn make(dim: usize, shape: Shape) -> Self {
        Self {
            dim,
            shape: Arc::new(shape),
        }
    }

    pub fn full(dim: usize) -> Self {
        Self::make(dim, Shape::Full)
    }

    pub fn singleton(point: Vector) -> Self {
        Self::make(point.len(), Shape::Singleton(point))
    }

    pub fn cuboid(lo: Vector, hi: Vector) -> Result<Self> {
        check_dim("box bounds", lo.len(), hi.len())?;
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidArgument("box with lo > hi".into()));
        }
        Ok(Self::make(lo.len(), Shape::Cuboid { lo, hi }))
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidArgument("negative ball radius".into()));
        }
        Ok(Self::make(center.len(), Shape::Ball { center, radius }))
    }

    /// Probability simplex `Δ_d`.
    pub fn simplex(d: usize) -> Self {
        Self::make(
            d,
            Shape::Simplex {
                lo: Vector::zeros(d),
                hi: Vector::from_element(d, f64::INFINITY),
            },
        )
    }

    /// `{x ∈ Δ_d : lo ≤ x ≤ hi}`.
    pub fn bounded_simplex(lo: Vector, hi: Vector) -> Result<Self> {
        check_dim("simplex bounds", lo.len(), hi.len())?;
        let lo = lo.map(|v| v.max(0.0));
        if lo.sum() > 1.0 + 1e-12 || hi.sum() < 1.0 - 1e-12 {
            return Err(Error::InvalidArgument("empty bounded simplex".into()));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(Error::InvalidArgument("simplex with lo > hi".into()));
        }
        Ok(Self::make(lo.len(), Shape::Simplex { lo, hi }))
    }

    /// Truncated simplex `Δ^ε = {λ ∈ Δ_L : λ ≥ ε}`.
    pub fn truncated_simplex(l: usize, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) || l as f64 * eps >= 1.0 + 1e-15 {
            return Err(Error::InvalidArgument(format!(
                "truncated simplex needs L·ε < 1 (L={l}, ε={eps})"
            )));
        }
        Self::bounded_simplex(
            Vector::from_element(l, eps),
            Vector::from_element(l, f64::INFINITY),
        )
    }

    pub fn halfspace(h: HalfSpace) -> Self {
        Self::make(h.a.len(), Shape::HalfSpace(h))
    }

    pub fn hyperplane(a: Vector, b: f64) -> Result<Self> {
        if a.norm() == 0.0 {
            return Err(Error::InvalidArgument("hyperplane with zero normal".into()));
        }
        Ok(Self::make(a.len(), Shape::Hyperplane { a, b }))
    }

    pub fn product(parts: Vec<ConvexSet>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("empty product".into()));
        }
        let dim = parts.iter().map(|p| p.dim).sum();
        Ok(Self::make(dim, Shape::Product(parts)))
    }

    pub fn intersection(parts: Vec<ConvexSet>) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::InvalidArgument("empty intersection".into()));
        };
        let dim = first.dim;
        for p in &parts {
            check_dim("intersection", dim, p.dim)?;
        }
        if parts.len() == 1 {
            return Ok(parts.into_iter().next().unwrap());
        }
        Ok(Self::make(dim, Shape::Intersection(parts)))
    }

    /// `base ∩ {x : aᵢᵀx ≤ bᵢ}`.
    pub fn with_halfspaces(base: ConvexSet, hs: Vec<HalfSpace>) -> Result<Self> {
        let mut parts = vec![base];
        parts.extend(hs.into_iter().map(ConvexSet::halfspace));
        Self::intersection(parts)
    }

    /// Flattened (column-major) symmetric `n×n` matrices between `lo` and `hi`
    /// in the Loewner order.
    pub fn psd_interval(lo: Matrix, hi: Matrix) -> Result<Self> {
        let n = lo.nrows();
        if lo.ncols() != n || hi.nrows() != n || hi.ncols() != n {
            return Err(Error::InvalidArgument("psd interval bounds must be square".into()));
        }
        if !linalg::is_psd(&(&hi - &lo), 1e-10) {
            return Err(Error::InvalidParameter("psd interval needs lo ⪯ hi".into()));
        }
        Ok(Self::make(n * n, Shape::PsdInterval { lo: linalg::sym(&lo), hi: linalg::sym(&hi) }))
    }

    pub fn psd_cone(n: usize) -> Self {
        Self::make(n * n, Shape::PsdCone { n })
    }

    pub fn scaled(inner: ConvexSet, factor: f64) -> Result<Self> {
        if !(factor >= 0.0) || !factor.is_finite() {
            return Err(Error::InvalidArgument("scale factor must be finite and ≥ 0".into()));
        }
        if factor == 0.0 || inner.is_full() {
            return Ok(Self::full(inner.dim));
        }
        if factor == 1.0 {
            return Ok(inner);
        }
        let dim = inner.dim;
        Ok(Self::make(dim, Shape::Scaled { inner, factor }))
    }

    /// `{y : map·y ∈ inner}`.
    pub fn preimage(inner: ConvexSet, map: Matrix) -> Result<Self> {
        check_dim("preimage map rows", inner.dim, map.nrows())?;
        if inner.is_full() {
            return Ok(Self::full(map.ncols()));
        }
        Ok(Self::make(map.ncols(), Shape::Preimage { inner, map }))
    }

    pub fn custom(oracle: Arc<dyn SetOracle>) -> Self {
        Self::make(oracle.dim(), Shape::Custom(oracle))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_full(&self) -> bool {
        matches!(*self.shape, Shape::Full)
    }

    pub fn as_singleton(&self) -> Option<&Vector> {
        match &*self.shape {
            Shape::Singleton(p) => Some(p),
            _ => None,
        }
    }

    /// Loewner bounds of a psd interval.
    pub fn as_psd_interval(&self) -> Option<(&Matrix, &Matrix)> {
        match &*self.shape {
            Shape::PsdInterval { lo, hi } => Some((lo, hi)),
            _ => None,
        }
    }

    /// Factors of a product set, or `None` when the set is not a product.
    pub fn product_parts(&self) -> Option<&[ConvexSet]> {
        match &*self.shape {
            Shape::Product(p) => Some(p),
            _ => None,
        }
    }

    /// Whether both values denote the same set object (or are both the full space).
    pub fn same_as(&self, other: &ConvexSet) -> bool {
        self.dim == other.dim
            && (Arc::ptr_eq(&self.shape, &other.shape) || (self.is_full() && other.is_full()))
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        if x.len() != self.dim {
            return false;
        }
        match &*self.shape {
            Shape::Full => true,
            Shape::Singleton(p) => (x - p).amax() <= tol,
            Shape::Cuboid { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
            Shape::Ball { center, radius } => (x - center).norm() <= radius + tol,
            Shape::Simplex { lo, hi } => {
                (x.sum() - 1.0).abs() <= tol
                    && x
                        .iter()
                        .zip(lo.iter().zip(hi.iter()))
                        .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
            }
            Shape::HalfSpace(h) => h.violation(x) <= tol,
            Shape::Hyperplane { a, b } => (a.dot(x) - b).abs() <= tol * a.norm(),
            Shape::Product(parts) => {
                let mut k = 0;
                parts.iter().all(|p| {
                    let ok = p.contains(&linalg::block(x, k, p.dim), tol);
                    k += p.dim;
                    ok
                })
            }
            Shape::Intersection(parts) => parts.iter().all(|p| p.contains(x, tol)),
            Shape::PsdInterval { lo, hi } => {
                let n = lo.nrows();
                let m = linalg::mat_of(x.as_slice(), n);
                if (&m - m.transpose()).amax() > tol {
                    return false;
                }
                linalg::min_eigenvalue(&(&m - lo)) >= -tol
                    && linalg::min_eigenvalue(&(hi - &m)) >= -tol
            }
            Shape::PsdCone { n } => {
                let m = linalg::mat_of(x.as_slice(), *n);
                (&m - m.transpose()).amax() <= tol && linalg::min_eigenvalue(&m) >= -tol
            }
            Shape::Scaled { inner, factor } => inner.contains(&(x * *factor), tol * factor),
            Shape::Preimage { inner, map } => inner.contains(&(map * x), tol),
            Shape::Custom(o) => o.contains(x, tol),
        }
    }

    pub fn project(&self, x: &Vector) -> Vector {
        debug_assert_eq!(x.len(), self.dim);
        match &*self.shape {
            Shape::Full => x.clone(),
            Shape::Singleton(p) => p.clone(),
            Shape::Cuboid { lo, hi } => {
                Vector::from_iterator(self.dim, (0..self.dim).map(|i| x[i].clamp(lo[i], hi[i])))
            }
            Shape::Ball { center, radius } => {
                let d = x - center;
                let n = d.norm();
                if n <= *radius {
                    x.clone()
                } else {
                    center + d * (radius / n)
                }
            }
            Shape::Simplex { lo, hi } => project_bounded_simplex(x, lo, hi),
            Shape::HalfSpace(h) => h.project(x),
            Shape::Hyperplane { a, b } => x - a * ((a.dot(x) - b) / a.norm_squared()),
            Shape::Product(parts) => {
                let mut out = Vector::zeros(self.dim);
                let mut k = 0;
                for p in parts {
                    let y = p.project(&linalg::block(x, k, p.dim));
                    out.rows_mut(k, p.dim).copy_from(&y);
                    k += p.dim;
                }
                out
            }
            Shape::Intersection(parts) => dykstra(parts, x),
            Shape::PsdInterval { lo, hi } => project_psd_interval(x, lo, hi),
            Shape::PsdCone { n } => {
                let m = linalg::mat_of(x.as_slice(), *n);
                linalg::vec_of(&linalg::spectral_map(&m, |l| l.max(0.0)))
            }
            Shape::Scaled { inner, factor } => inner.project(&(x * *factor)) / *factor,
            Shape::Preimage { inner, map } => project_preimage(inner, map, x),
            Shape::Custom(o) => o.project(x),
        }
    }

    /// Support function value and a maximiser; `None` when unbounded in the
    /// direction or when the oracle is not available.
    pub fn support(&self, g: &Vector) -> Option<(f64, Vector)> {
        if g.len() != self.dim {
            return None;
        }
        match &*self.shape {
            Shape::Full => (g.amax() == 0.0).then(|| (0.0, Vector::zeros(self.dim))),
            Shape::Singleton(p) => Some((g.dot(p), p.clone())),
            Shape::Cuboid { lo, hi } => {
                let x = Vector::from_iterator(
                    self.dim,
                    (0..self.dim).map(|i| {
                        if g[i] > 0.0 {
                            hi[i]
                        } else if g[i] < 0.0 {
                            lo[i]
                        } else {
                            0.5 * (lo[i] + hi[i])
                        }
                    }),
                );
                Some((g.dot(&x), x))
            }
            Shape::Ball { center, radius } => {
                let n = g.norm();
                let x = if n > 0.0 { center + g * (radius / n) } else { center.clone() };
                Some((g.dot(center) + radius * n, x))
            }
            Shape::Simplex { lo, hi } => {
                let mut x = lo.clone();
                let mut rest = 1.0 - lo.sum();
                let mut order: Vec<usize> = (0..self.dim).collect();
                order.sort_by(|&i, &j| g[j].partial_cmp(&g[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
                for i in order {
                    if rest <= 0.0 {
                        break;
                    }
                    let take = (hi[i] - lo[i]).min(rest);
                    x[i] += take;
                    rest -= take;
                }
                Some((g.dot(&x), x))
            }
            Shape::HalfSpace(_) | Shape::Hyperplane { .. } => None,
            Shape::Product(parts) => {
                let mut x = Vector::zeros(self.dim);
                let mut total = 0.0;
                let mut k = 0;
                for p in parts {
                    let (v, xi) = p.support(&linalg::block(g, k, p.dim))?;
                    total += v;
                    x.rows_mut(k, p.dim).copy_from(&xi);
                    k += p.dim;
                }
                Some((total, x))
            }
            Shape::Intersection(_) | Shape::PsdCone { .. } | Shape::Preimage { .. } => None,
            Shape::PsdInterval { lo, hi } => {
                let n = lo.nrows();
                let gm = linalg::sym(&linalg::mat_of(g.as_slice(), n));
                let droot = linalg::sqrtm_psd(&(hi - lo));
                let inner = &droot * &gm * &droot;
                let pos = linalg::spectral_map(&inner, |l| if l > 0.0 { 1.0 } else { 0.0 });
                let x = lo + &droot * pos * &droot;
                let x = linalg::sym(&x);
                let v = (gm.component_mul(&x)).sum();
                Some((v, linalg::vec_of(&x)))
            }
            Shape::Scaled { inner, factor } => {
                let (v, x) = inner.support(g)?;
                Some((v / factor, x / *factor))
            }
            Shape::Custom(o) => o.support(g),
        }
    }

    pub fn support_value(&self, g: &Vector) -> Option<f64> {
        self.support(g).map(|(v, _)| v)
    }

    pub fn has_support(&self) -> bool {
        self.support(&Vector::zeros(self.dim)).is_some()
    }

    /// Radius of a ball around the origin containing the set.
    pub fn bound_radius(&self) -> Option<f64> {
        match &*self.shape {
            Shape::Full | Shape::HalfSpace(_) | Shape::Hyperplane { .. } | Shape::PsdCone { .. } => {
                None
            }
            Shape::Singleton(p) => Some(p.norm()),
            Shape::Cuboid { lo, hi } => Some(
                lo.iter()
                    .zip(hi.iter())
                    .map(|(l, h)| l.abs().max(h.abs()).powi(2))
                    .sum::<f64>()
                    .sqrt(),
            ),
            Shape::Ball { center, radius } => Some(center.norm() + radius),
            Shape::Simplex { .. } => Some(1.0),
            Shape::Product(parts) => {
                let mut s = 0.0;
                for p in parts {
                    s += p.bound_radius()?.powi(2);
                }
                Some(s.sqrt())
            }
            Shape::Intersection(parts) => parts
                .iter()
                .filter_map(|p| p.bound_radius())
                .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.min(r)))),
            Shape::PsdInterval { lo, hi } => Some(lo.norm() + (hi - lo).norm()),
            Shape::Scaled { inner, factor } => inner.bound_radius().map(|r| r / factor),
            Shape::Preimage { .. } => None,
            Shape::Custom(o) => o.bound_radius(),
        }
    }

    /// A ball `(center, radius)` containing the set.
    pub fn enclosing_ball(&self) -> Option<(Vector, f64)> {
        match &*self.shape {
            Shape::Singleton(p) => Some((p.clone(), 0.0)),
            Shape::Cuboid { lo, hi } => {
                let c = (lo + hi) * 0.5;
                let r = ((hi - lo) * 0.5).norm();
                Some((c, r))
            }
            Shape::Ball { center, radius } => Some((center.clone(), *radius)),
            Shape::Product(parts) => {
                let mut c = Vector::zeros(self.dim);
                let mut r2 = 0.0;
                let mut k = 0;
                for p in parts {
                    let (ci, ri) = p.enclosing_ball()?;
                    c.rows_mut(k, p.dim).copy_from(&ci);
                    r2 += ri * ri;
                    k += p.dim;
                }
                Some((c, r2.sqrt()))
            }
            _ => self.bound_radius().map(|r| (Vector::zeros(self.dim), r)),
        }
    }

    /// A point of the set obtained by projecting a random Gaussian point
    /// around the enclosing ball centre.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let (c, r) = self
            .enclosing_ball()
            .unwrap_or_else(|| (Vector::zeros(self.dim), 1.0));
        let scale = if r > 0.0 { r } else { 1.0 };
        let z = Vector::from_iterator(self.dim, (0..self.dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        self.project(&(c + z * scale))
    }

    /// Any point of the set; deterministic.
    pub fn anchor(&self) -> Vector {
        match self.enclosing_ball() {
            Some((c, _)) => self.project(&c),
            None => self.project(&Vector::zeros(self.dim)),
        }
    }
}

fn project_bounded_simplex(x: &Vector, lo: &Vector, hi: &Vector) -> Vector {
    let n = x.len();
    let eval = |tau: f64| -> f64 { (0..n).map(|i| (x[i] - tau).clamp(lo[i], hi[i])).sum::<f64>() };
    let mut a = x.min() - 1.0 - hi.iter().filter(|h| h.is_finite()).fold(0.0_f64, |m, h| m.max(h.abs()));
    let mut b = x.max() + lo.amax() + 1.0;
    while eval(a) < 1.0 {
        a -= (b - a).max(1.0);
    }
    while eval(b) > 1.0 {
        b += (b - a).max(1.0);
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if eval(m) > 1.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let tau = 0.5 * (a + b);
    let mut y = Vector::from_iterator(n, (0..n).map(|i| (x[i] - tau).clamp(lo[i], hi[i])));
    // distribute the residual mass on free coordinates
    let resid = 1.0 - y.sum();
    if resid != 0.0 {
        let free: Vec<usize> = (0..n).filter(|&i| y[i] > lo[i] && y[i] < hi[i]).collect();
        if !free.is_empty() {
            let share = resid / free.len() as f64;
            for i in free {
                y[i] = (y[i] + share).clamp(lo[i], hi[i]);
            }
        }
    }
    y
}

fn project_psd_interval(x: &Vector, lo: &Matrix, hi: &Matrix) -> Vector {
    let n = lo.nrows();
    let mut m = linalg::sym(&linalg::mat_of(x.as_slice(), n));
    let mut p = Matrix::zeros(n, n);
    let mut q = Matrix::zeros(n, n);
    for _ in 0..2000 {
        let y = lo + linalg::spectral_map(&(&m + &p - lo), |l| l.max(0.0));
        p = &m + &p - &y;
        let z = hi - linalg::spectral_map(&(hi - (&y + &q)), |l| l.max(0.0));
        q = &y + &q - &z;
        let change = (&z - &m).amax();
        m = z;
        if change <= 1e-14 * (1.0 + m.amax()) {
            break;
        }
    }
    linalg::vec_of(&linalg::sym(&m))
}

/// Exact projection onto `{lo ≤ y ≤ hi, aᵀy ≤ b}` by bisection on the multiplier.
fn project_cut_cuboid(lo: &Vector, hi: &Vector, h: &HalfSpace, x: &Vector) -> Vector {
    let clip = |lam: f64| Vector::from_iterator(x.len(), (0..x.len()).map(|i| (x[i] - lam * h.a[i]).clamp(lo[i], hi[i])));
    let y0 = clip(0.0);
    if h.a.dot(&y0) <= h.b {
        return y0;
    }
    let mut hi_lam = 1.0;
    while h.a.dot(&clip(hi_lam)) > h.b && hi_lam < 1e300 {
        hi_lam *= 2.0;
    }
    let mut lo_lam = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo_lam + hi_lam);
        if mid <= lo_lam || mid >= hi_lam {
            break;
        }
        if h.a.dot(&clip(mid)) > h.b {
            lo_lam = mid;
        } else {
            hi_lam = mid;
        }
    }
    clip(hi_lam)
}

fn dykstra(parts: &[ConvexSet], x: &Vector) -> Vector {
    if let [base, cut] = parts {
        if let (Shape::Cuboid { lo, hi }, Shape::HalfSpace(h)) = (&*base.shape, &*cut.shape) {
            return project_cut_cuboid(lo, hi, h, x);
        }
    }
    let first = parts[0].project(x);
    if parts[1..].iter().all(|p| p.contains(&first, 1e-13)) {
        return first;
    }
    let mut cur = x.clone();
    let mut incr: Vec<Vector> = parts.iter().map(|p| Vector::zeros(p.dim())).collect();
    for _ in 0..DYKSTRA_SWEEPS {
        let prev = cur.clone();
        for (p, inc) in parts.iter().zip(incr.iter_mut()) {
            let y = p.project(&(&cur + &*inc));
            *inc = &cur + &*inc - &y;
            cur = y;
        }
        let change = (&cur - &prev).amax();
        if change <= 1e-14 * (1.0 + cur.amax()) {
            break;
        }
    }
    cur
}

fn project_preimage(inner: &ConvexSet, map: &Matrix, x: &Vector) -> Vector {
    // ADMM on min ½‖y−x‖² s.t. map·y = z ∈ inner
    let rho = 1.0;
    let n = map.ncols();
    let sys = Matrix::identity(n, n) + map.transpose() * map * rho;
    let Some(chol) = sys.cholesky() else {
        return x.clone();
    };
    let mut z = inner.project(&(map * x));
    let mut w = Vector::zeros(z.len());
    let mut y = x.clone();
    for _ in 0..5000 {
        let rhs = x + map.transpose() * ((&z - &w) * rho);
        y = chol.solve(&rhs);
        let ay = map * &y;
        let z_new = inner.project(&(&ay + &w));
        w += &ay - &z_new;
        let primal = (&ay - &z_new).amax();
        let dual = (&z_new - &z).amax();
        z = z_new;
        if primal <= 1e-12 && dual <= 1e-12 {
            break;
        }
    }
    y
}
