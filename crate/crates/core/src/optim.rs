//! Spectral projected gradient (nonmonotone Barzilai–Borwein steps with
//! safeguarded backtracking) and a projected subgradient fallback.

use crate::error::Result;
use crate::linalg::{inf_norm, Vector};

#[derive(Clone, Debug)]
pub struct SpgOptions {
    pub max_iter: usize,
    /// Stop when `‖P(x − ∇f) − x‖∞ ≤ tol`.
    pub tol: f64,
    /// Nonmonotone window length.
    pub memory: usize,
}

impl Default for SpgOptions {
    fn default() -> Self {
        Self {
            max_iter: 5_000,
            tol: 1e-10,
            memory: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpgResult {
    pub x: Vector,
    pub f: f64,
    pub grad: Vector,
    pub iterations: usize,
    pub pg_norm: f64,
    pub converged: bool,
}

const STEP_MIN: f64 = 1e-14;
const STEP_MAX: f64 = 1e14;

/// Minimise `f` over the set described by `project`, starting at `x0`.
///
/// `eval` returns the value and a (sub)gradient. Evaluation errors at trial
/// points are treated as `+∞` and trigger backtracking.
pub fn spg_minimize<F, P>(mut eval: F, project: P, x0: &Vector, opts: &SpgOptions) -> Result<SpgResult>
where
    F: FnMut(&Vector) -> Result<(f64, Vector)>,
    P: Fn(&Vector) -> Vector,
{
    let mut x = project(x0);
    let (mut f, mut g) = eval(&x)?;
    let mut best = (x.clone(), f, g.clone());
    let mut hist = vec![f];
    let pg0 = &project(&(&x - &g)) - &x;
    let mut pg = inf_norm(&pg0);
    let mut alpha = if pg > 0.0 { (1.0 / pg).clamp(STEP_MIN, STEP_MAX) } else { 1.0 };
    let mut it = 0;
    let mut converged = pg <= opts.tol;
    while !converged && it < opts.max_iter {
        it += 1;
        let d = &project(&(&x - &g * alpha)) - &x;
        let gtd = g.dot(&d);
        if !(gtd < 0.0) {
            converged = inf_norm(&d) <= opts.tol.max(1e-15);
            break;
        }
        let fmax = hist.iter().rev().take(opts.memory).cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut lam = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + &d * lam;
            match eval(&xn) {
                Ok((fnew, gnew)) if fnew.is_finite() && fnew <= fmax + 1e-4 * lam * gtd => {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
                Ok((fnew, _)) if fnew.is_finite() => {
                    let denom = fnew - f - lam * gtd;
                    let trial = if denom > 0.0 { -0.5 * lam * lam * gtd / denom } else { 0.5 * lam };
                    lam = if trial >= 0.1 * lam && trial <= 0.9 * lam { trial } else { 0.5 * lam };
                }
                _ => lam *= 0.5,
            }
        }
        let Some((xn, fnew, gnew)) = accepted else {
            break;
        };
        let s = &xn - &x;
        let y = &gnew - &g;
        let sty = s.dot(&y);
        alpha = if sty > 0.0 { (s.norm_squared() / sty).clamp(STEP_MIN, STEP_MAX) } else { STEP_MAX.min(alpha * 10.0) };
        x = xn;
        f = fnew;
        g = gnew;
        hist.push(f);
        if f < best.1 {
            best = (x.clone(), f, g.clone());
        }
        pg = inf_norm(&(&project(&(&x - &g)) - &x));
        if pg <= opts.tol || s.amax() <= 1e-16 * (1.0 + x.amax()) {
            converged = true;
        }
    }
    let (bx, bf, bg) = if f <= best.1 { (x, f, g) } else { best };
    let bpg = inf_norm(&(&project(&(&bx - &bg)) - &bx));
    Ok(SpgResult {
        x: bx,
        f: bf,
        grad: bg,
        iterations: it,
        pg_norm: bpg,
        converged,
    })
}

/// Maximise by minimising the negation.
pub fn spg_maximize<F, P>(mut eval: F, project: P, x0: &Vector, opts: &SpgOptions) -> Result<SpgResult>
where
    F: FnMut(&Vector) -> Result<(f64, Vector)>,
    P: Fn(&Vector) -> Vector,
{
    let mut r = spg_minimize(
        |x| {
            let (v, g) = eval(x)?;
            Ok((-v, -g))
        },
        project,
        x0,
        opts,
    )?;
    r.f = -r.f;
    r.grad = -r.grad;
    Ok(r)
}

/// Projected subgradient descent with Polyak steps towards `target` (a lower
/// bound on the optimum), keeping the best point seen.
pub fn polyak_minimize<F, P>(
    mut eval: F,
    project: P,
    x0: &Vector,
    target: f64,
    max_iter: usize,
) -> Result<(Vector, f64)>
where
    F: FnMut(&Vector) -> Result<(f64, Vector)>,
    P: Fn(&Vector) -> Vector,
{
    let mut x = project(x0);
    let (mut f, mut g) = eval(&x)?;
    let mut best = (x.clone(), f);
    for _ in 0..max_iter {
        let gn = g.norm_squared();
        if gn == 0.0 || f - target <= 0.0 {
            break;
        }
        let step = (f - target) / gn;
        x = project(&(&x - &g * step));
        let (fn_, gn_) = eval(&x)?;
        f = fn_;
        g = gn_;
        if f < best.1 {
            best = (x.clone(), f);
        }
    }
    Ok(best)
}
