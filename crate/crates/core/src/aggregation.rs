//! Aggregation of candidate estimates `g₁…g_L` of `Gμ̄`: Voronoi geometry,
//! purification, Individual Inference procedures, per-cell `δ` calibration
//! and the selection rule, plus the sub-Gaussian closed-form fast path.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::families::RegularData;
use crate::linalg::{self, Matrix, Vector};
use crate::multitest::{build_battery, infer_color, shift_battery, ClosenessRelation, ColorDecision, ShiftedBattery};
use crate::saddle::SolverOptions;
use crate::sets::{ConvexSet, HalfSpace};

const FEASIBILITY_TOL: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct AggregationProblem {
    pub datas: Vec<RegularData>,
    /// Linear map `ℝⁿ → ℝᵐ`.
    pub g: Matrix,
    pub estimates: Vec<Vector>,
    pub k: usize,
    pub eps: f64,
    pub options: SolverOptions,
}

impl AggregationProblem {
    pub fn new(datas: Vec<RegularData>, g: Matrix, estimates: Vec<Vector>, k: usize, eps: f64) -> Result<Self> {
        let Some(first) = datas.first() else {
            return Err(Error::InvalidArgument("aggregation needs at least one family".into()));
        };
        let n = first.param_dim();
        let d = first.obs_dim();
        for x in &datas {
            check_dim("family parameter dimension", n, x.param_dim())?;
            check_dim("family observation dimension", d, x.obs_dim())?;
            if x.m_set().bound_radius().is_none() {
                return Err(Error::InvalidArgument("aggregation needs bounded parameter sets".into()));
            }
        }
        check_dim("columns of G", n, g.ncols())?;
        for e in &estimates {
            check_dim("estimate", g.nrows(), e.len())?;
        }
        if k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::InvalidArgument(format!("eps = {eps} outside (0, ½)")));
        }
        voronoi_geometry(&estimates)?;
        Ok(Self {
            datas,
            g,
            estimates,
            k,
            eps,
            options: SolverOptions::default(),
        })
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    /// `2·‖G‖·max_i R(M_i)`, a bound on the diameter of `G(∪M_i)`.
    pub fn diameter_bound(&self) -> f64 {
        let r = self
            .datas
            .iter()
            .filter_map(|x| x.m_set().bound_radius())
            .fold(0.0_f64, f64::max);
        2.0 * linalg::spectral_norm(&self.g) * r
    }
}

/// `u_ℓℓ' = (g_ℓ' − g_ℓ)/‖g_ℓ' − g_ℓ‖`, `v_ℓℓ' = ½u_ℓℓ'ᵀ(g_ℓ' + g_ℓ)`.
#[derive(Clone, Debug)]
pub struct VoronoiGeometry {
    pub u: Vec<Vec<Vector>>,
    pub v: Matrix,
}

impl VoronoiGeometry {
    /// Half-spaces (in estimate space) of cell `ℓ`: `u_ℓℓ'ᵀx ≤ v_ℓℓ'`.
    pub fn cell(&self, ell: usize) -> Vec<(Vector, f64)> {
        (0..self.u.len())
            .filter(|&o| o != ell)
            .map(|o| (self.u[ell][o].clone(), self.v[(ell, o)]))
            .collect()
    }
}

pub fn voronoi_geometry(estimates: &[Vector]) -> Result<VoronoiGeometry> {
    let l = estimates.len();
    let m = estimates.first().map_or(0, |e| e.len());
    let mut u = vec![vec![Vector::zeros(m); l]; l];
    let mut v = Matrix::zeros(l, l);
    for a in 0..l {
        for b in 0..l {
            if a == b {
                continue;
            }
            let diff = &estimates[b] - &estimates[a];
            let n = diff.norm();
            if n == 0.0 {
                return Err(Error::InvalidArgument(format!("estimates {a} and {b} coincide")));
            }
            let ub = diff / n;
            v[(a, b)] = 0.5 * ub.dot(&(&estimates[b] + &estimates[a]));
            u[a][b] = ub;
        }
    }
    Ok(VoronoiGeometry { u, v })
}

fn lift_halfspace(g: &Matrix, u: &Vector, v: f64) -> HalfSpace {
    HalfSpace::new(g.transpose() * u, v)
}

/// A point of `base ∩ hs` by alternating projections, or `None` when the
/// residual stays above `1e-7`.
pub fn find_feasible(base: &ConvexSet, hs: &[HalfSpace]) -> Option<Vector> {
    let mut x = base.anchor();
    let viol = |x: &Vector| hs.iter().map(|h| h.violation(x)).fold(0.0_f64, f64::max);
    let mut last = viol(&x);
    if last <= 1e-12 {
        return Some(x);
    }
    for _ in 0..20_000 {
        let prev = x.clone();
        for h in hs {
            x = h.project(&x);
        }
        x = base.project(&x);
        let v = viol(&x);
        if v <= 1e-10 {
            return Some(x);
        }
        let moved = (&x - &prev).amax();
        if moved <= 1e-15 * (1.0 + x.amax()) || (last - v).abs() <= 1e-16 {
            break;
        }
        last = v;
    }
    (viol(&x) <= FEASIBILITY_TOL).then_some(x)
}

fn cell_constraints(problem: &AggregationProblem, geo: &VoronoiGeometry, ell: usize) -> Vec<HalfSpace> {
    geo.cell(ell)
        .into_iter()
        .map(|(u, v)| lift_halfspace(&problem.g, &u, v))
        .collect()
}

/// Drop estimates whose Voronoi cell misses every `G(M_i)`, repeatedly.
/// Returns the reduced problem and the original indices kept.
pub fn purify(problem: &AggregationProblem) -> Result<(AggregationProblem, Vec<usize>)> {
    let mut kept: Vec<usize> = (0..problem.len()).collect();
    loop {
        let ests: Vec<Vector> = kept.iter().map(|&i| problem.estimates[i].clone()).collect();
        if ests.len() < 2 {
            return Err(Error::DegenerateInput(format!(
                "{} estimate(s) left after purification; at least two are needed",
                ests.len()
            )));
        }
        let sub = AggregationProblem { estimates: ests, ..problem.clone() };
        let geo = voronoi_geometry(&sub.estimates)?;
        let alive: Vec<bool> = (0..sub.len())
            .map(|ell| {
                let hs = cell_constraints(&sub, &geo, ell);
                sub.datas.iter().any(|x| find_feasible(x.m_set(), &hs).is_some())
            })
            .collect();
        if alive.iter().all(|&a| a) {
            return Ok((sub, kept));
        }
        kept = kept.into_iter().zip(alive).filter(|(_, a)| *a).map(|(i, _)| i).collect();
    }
}

/// Red/blue color test for cell `ℓ` at separation `δ`.
#[derive(Clone, Debug)]
pub struct InferenceProcedure {
    pub ell: usize,
    pub delta: f64,
    /// Color-inference risk `eps_hat`, 0 when no blue set exists.
    pub risk: f64,
    pub n_red: usize,
    pub n_blue: usize,
    shifted: Option<ShiftedBattery>,
}

impl InferenceProcedure {
    /// Whether the observations color `g_ℓ` red.
    pub fn is_red(&self, observations: &[Vector]) -> Result<bool> {
        let Some(sb) = &self.shifted else {
            return Ok(true);
        };
        let partition = vec![(0..self.n_red).collect(), (self.n_red..self.n_red + self.n_blue).collect()];
        Ok(infer_color(&partition, sb, observations)? == ColorDecision::Color(0))
    }

    pub fn shifted(&self) -> Option<&ShiftedBattery> {
        self.shifted.as_ref()
    }
}

/// Build the Individual Inference procedure `A^{ℓδ}_K`.
pub fn individual_inference(problem: &AggregationProblem, ell: usize, delta: f64) -> Result<InferenceProcedure> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("δ must be positive".into()));
    }
    if ell >= problem.len() {
        return Err(Error::InvalidArgument(format!("cell index {ell} out of range")));
    }
    let geo = voronoi_geometry(&problem.estimates)?;
    let red_hs = cell_constraints(problem, &geo, ell);
    let mut red = Vec::new();
    let mut blue = Vec::new();
    for x in &problem.datas {
        if find_feasible(x.m_set(), &red_hs).is_some() {
            red.push(x.restrict(ConvexSet::with_halfspaces(x.m_set().clone(), red_hs.clone())?)?);
        }
    }
    for other in 0..problem.len() {
        if other == ell {
            continue;
        }
        let mut hs = cell_constraints(problem, &geo, other);
        // u_ℓℓ'ᵀGμ ≥ v_ℓℓ' + δ
        let u = &geo.u[ell][other];
        hs.push(lift_halfspace(&problem.g, &-u, -(geo.v[(ell, other)] + delta)));
        for x in &problem.datas {
            if find_feasible(x.m_set(), &hs).is_some() {
                blue.push(x.restrict(ConvexSet::with_halfspaces(x.m_set().clone(), hs.clone())?)?);
            }
        }
    }
    let n_red = red.len();
    let n_blue = blue.len();
    if n_blue == 0 || n_red == 0 {
        return Ok(InferenceProcedure { ell, delta, risk: 0.0, n_red, n_blue, shifted: None });
    }
    let mut hyps = red;
    hyps.extend(blue);
    let partition = vec![(0..n_red).collect::<Vec<_>>(), (n_red..n_red + n_blue).collect()];
    let closeness = ClosenessRelation::from_partition(n_red + n_blue, &partition)?;
    let battery = build_battery(&hyps, &closeness, &problem.options)
        .map_err(|e| Error::Battery(format!("cell {ell}, δ = {delta:.6e}: {e}")))?;
    let shifted = shift_battery(battery, problem.k)?;
    Ok(InferenceProcedure {
        ell,
        delta,
        risk: shifted.eps_hat,
        n_red,
        n_blue,
        shifted: Some(shifted),
    })
}

#[derive(Clone, Debug)]
pub struct DeltaCalibration {
    pub delta: f64,
    pub risk: f64,
    /// Number of progression terms evaluated.
    pub steps: usize,
    /// The progression reached the negligible level before the risk
    /// exceeded the budget.
    pub hit_floor: bool,
    /// `risk ≤ budget` at the returned `δ`.
    pub within_budget: bool,
}

pub const DELTA_FLOOR: f64 = 1e-6;
pub const DELTA_RATIO: f64 = 0.5;

/// Walk `δ⁰, κδ⁰, κ²δ⁰, …` and return the last term whose risk is within
/// `budget`, or the first term below `floor`.
pub fn calibrate_progression<F>(delta0: f64, kappa: f64, budget: f64, floor: f64, mut risk: F) -> Result<DeltaCalibration>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(delta0 > 0.0) || !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidArgument("progression needs δ⁰ > 0 and κ ∈ (0, 1)".into()));
    }
    let mut delta = delta0;
    let mut r = risk(delta)?;
    let mut steps = 1;
    if r > budget {
        log::warn!("risk {r:.3e} at the initial δ = {delta:.3e} already exceeds the budget {budget:.3e}");
        return Ok(DeltaCalibration { delta, risk: r, steps, hit_floor: false, within_budget: false });
    }
    loop {
        let next = delta * kappa;
        let rn = risk(next)?;
        steps += 1;
        if next < floor {
            log::warn!("δ progression reached the negligible level {next:.3e}");
            return Ok(DeltaCalibration { delta: next, risk: rn, steps, hit_floor: true, within_budget: rn <= budget });
        }
        if rn > budget {
            return Ok(DeltaCalibration { delta, risk: r, steps, hit_floor: false, within_budget: true });
        }
        delta = next;
        r = rn;
    }
}

/// Calibrated `δ_ℓ` with budget `eps/L`.
pub fn calibrate_delta(problem: &AggregationProblem, ell: usize) -> Result<(DeltaCalibration, InferenceProcedure)> {
    let delta0 = problem.diameter_bound().max(DELTA_FLOOR * 2.0);
    let budget = problem.eps / problem.len() as f64;
    let mut procs: Vec<InferenceProcedure> = Vec::new();
    let cal = calibrate_progression(delta0, DELTA_RATIO, budget, DELTA_FLOOR, |delta| {
        let p = individual_inference(problem, ell, delta)?;
        let r = p.risk;
        procs.push(p);
        Ok(r)
    })?;
    let chosen = procs
        .into_iter()
        .rev()
        .find(|p| p.delta == cal.delta)
        .ok_or_else(|| Error::InvalidArgument("calibration lost its procedure".into()))?;
    Ok((cal, chosen))
}

/// Calibrated procedures for every cell of a purified problem.
#[derive(Clone, Debug)]
pub struct Aggregator {
    pub problem: AggregationProblem,
    /// Original indices of the estimates kept by purification.
    pub kept: Vec<usize>,
    pub procedures: Vec<InferenceProcedure>,
    pub calibrations: Vec<Option<DeltaCalibration>>,
}

impl Aggregator {
    /// Purify, then calibrate every cell (cells run in parallel).
    pub fn build(problem: &AggregationProblem) -> Result<Self> {
        let (sub, kept) = purify(problem)?;
        let results: Vec<Result<(DeltaCalibration, InferenceProcedure)>> =
            (0..sub.len()).into_par_iter().map(|ell| calibrate_delta(&sub, ell)).collect();
        let mut procedures = Vec::new();
        let mut calibrations = Vec::new();
        for r in results {
            let (c, p) = r?;
            procedures.push(p);
            calibrations.push(Some(c));
        }
        Ok(Self { problem: sub, kept, procedures, calibrations })
    }

    /// Purify, then build procedures at the given per-cell `δ_ℓ` (indexed by
    /// the kept estimates).
    pub fn with_deltas(problem: &AggregationProblem, deltas: &[f64]) -> Result<Self> {
        let (sub, kept) = purify(problem)?;
        if deltas.len() != problem.len() {
            return Err(Error::DimensionMismatch {
                context: "per-cell δ list".into(),
                expected: problem.len(),
                got: deltas.len(),
            });
        }
        let results: Vec<Result<InferenceProcedure>> = (0..sub.len())
            .into_par_iter()
            .map(|ell| individual_inference(&sub, ell, deltas[kept[ell]]))
            .collect();
        let procedures = results.into_iter().collect::<Result<Vec<_>>>()?;
        let calibrations = vec![None; sub.len()];
        Ok(Self { problem: sub, kept, procedures, calibrations })
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.procedures.iter().map(|p| p.delta).collect()
    }

    pub fn max_delta(&self) -> f64 {
        self.deltas().into_iter().fold(0.0, f64::max)
    }

    /// Lowest-index red estimate (original indexing), or the first kept
    /// estimate when none is red.
    pub fn select(&self, observations: &[Vector]) -> Result<usize> {
        if observations.len() != self.problem.k {
            return Err(Error::InvalidArgument(format!(
                "expected {} observations, got {}",
                self.problem.k,
                observations.len()
            )));
        }
        for (ell, p) in self.procedures.iter().enumerate() {
            if p.is_red(observations)? {
                return Ok(self.kept[ell]);
            }
        }
        Ok(self.kept[0])
    }
}

/// Build and run the aggregation routine once.
pub fn aggregate(problem: &AggregationProblem, observations: &[Vector]) -> Result<usize> {
    Aggregator::build(problem)?.select(observations)
}

/// Closed-form aggregation for one sub-Gaussian family with known `Θ`.
#[derive(Clone, Debug)]
pub struct SubGaussianFastPath {
    pub estimates: Vec<Vector>,
    pub geometry: VoronoiGeometry,
    pub deltas: Vec<f64>,
    pub theta: Matrix,
    pub k: usize,
    pub eps: f64,
}

impl SubGaussianFastPath {
    pub fn new(m: &ConvexSet, theta: &Matrix, estimates: &[Vector], k: usize, eps: f64) -> Result<Self> {
        let l = estimates.len();
        if l < 2 {
            return Err(Error::InvalidArgument("fast path needs at least two estimates".into()));
        }
        let d = estimates[0].len();
        check_dim("Θ", d, theta.nrows())?;
        if theta.clone().cholesky().is_none() {
            return Err(Error::InvalidParameter("Θ must be positive definite".into()));
        }
        for e in estimates {
            if !m.contains(e, 1e-9) {
                return Err(Error::InvalidArgument("estimates must lie in M".into()));
            }
        }
        if k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        let lf = l as f64;
        let arg = lf * (lf - 1.0).sqrt() / (eps * k as f64);
        if !(arg > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "εK = {} is not below L√(L−1) = {}; δ is undefined",
                eps * k as f64,
                lf * (lf - 1.0).sqrt()
            )));
        }
        let geometry = voronoi_geometry(estimates)?;
        let log_arg = arg.ln();
        let deltas = (0..l)
            .map(|a| {
                (0..l)
                    .filter(|&b| b != a)
                    .map(|b| {
                        let u = &geometry.u[a][b];
                        (log_arg * u.dot(&(theta * u))).sqrt()
                    })
                    .fold(0.0_f64, f64::max)
            })
            .collect();
        Ok(Self { estimates: estimates.to_vec(), geometry, deltas, theta: theta.clone(), k, eps })
    }

    /// `ψ_ℓℓ'` statistic.
    pub fn psi(&self, ell: usize, other: &usize, sum: &Vector) -> f64 {
        let l = self.estimates.len() as f64;
        let u = &self.geometry.u[ell][*other];
        let delta = self.deltas[ell];
        let w = (&self.estimates[ell] + &self.estimates[*other] + u * delta) * 0.5;
        let utu = u.dot(&(&self.theta * u));
        delta / (2.0 * utu) * u.dot(&(&w * self.k as f64 - sum)) + 0.5 * (l - 1.0).ln()
    }

    pub fn is_red(&self, ell: usize, observations: &[Vector]) -> bool {
        let d = self.estimates[0].len();
        let sum = observations.iter().fold(Vector::zeros(d), |acc, w| acc + w);
        (0..self.estimates.len())
            .filter(|&o| o != ell)
            .all(|o| self.psi(ell, &o, &sum) > 0.0)
    }

    pub fn select(&self, observations: &[Vector]) -> Result<usize> {
        if observations.len() != self.k {
            return Err(Error::InvalidArgument(format!("expected {} observations, got {}", self.k, observations.len())));
        }
        for w in observations {
            check_dim("observation", self.estimates[0].len(), w.len())?;
        }
        Ok((0..self.estimates.len())
            .find(|&ell| self.is_red(ell, observations))
            .unwrap_or(0))
    }
}

/// One-shot fast-path selection.
pub fn subgaussian_fast_path(
    m: &ConvexSet,
    theta: &Matrix,
    estimates: &[Vector],
    k: usize,
    eps: f64,
    observations: &[Vector],
) -> Result<usize> {
    SubGaussianFastPath::new(m, theta, estimates, k, eps)?.select(observations)
}
