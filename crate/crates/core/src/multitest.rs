//! Testing many hypotheses up to closeness: pairwise detector batteries,
//! the risk matrix `E^(K)`, Perron–Frobenius shifts and color inference.

use rayon::prelude::*;

use crate::detector::{build_detector, AffineDetector};
use crate::error::{check_dim, Error, Result};
use crate::families::RegularData;
use crate::linalg::{Matrix, Vector};
use crate::saddle::{solve_saddle, SaddleProblem, SolverOptions};

/// Symmetric reflexive relation on `{0, …, J−1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosenessRelation {
    j: usize,
    close: Vec<bool>,
}

impl ClosenessRelation {
    /// Only the diagonal is close.
    pub fn diagonal(j: usize) -> Self {
        let mut close = vec![false; j * j];
        for i in 0..j {
            close[i * j + i] = true;
        }
        Self { j, close }
    }

    /// Diagonal plus the listed pairs (symmetrised).
    pub fn from_pairs(j: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut c = Self::diagonal(j);
        for &(a, b) in pairs {
            if a >= j || b >= j {
                return Err(Error::InvalidArgument(format!("closeness pair ({a}, {b}) out of range for J={j}")));
            }
            c.close[a * j + b] = true;
            c.close[b * j + a] = true;
        }
        Ok(c)
    }

    /// Same-color relation of a partition.
    pub fn from_partition(j: usize, partition: &[Vec<usize>]) -> Result<Self> {
        let colors = colors_of(j, partition)?;
        let mut c = Self::diagonal(j);
        for a in 0..j {
            for b in 0..j {
                c.close[a * j + b] = colors[a] == colors[b];
            }
        }
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.j
    }

    pub fn is_empty(&self) -> bool {
        self.j == 0
    }

    pub fn is_close(&self, a: usize, b: usize) -> bool {
        self.close[a * self.j + b]
    }
}

fn colors_of(j: usize, partition: &[Vec<usize>]) -> Result<Vec<usize>> {
    let mut colors = vec![usize::MAX; j];
    for (c, block) in partition.iter().enumerate() {
        for &i in block {
            if i >= j {
                return Err(Error::InvalidArgument(format!("partition index {i} out of range for J={j}")));
            }
            if colors[i] != usize::MAX {
                return Err(Error::InvalidArgument(format!("index {i} appears in two colors")));
            }
            colors[i] = c;
        }
    }
    if let Some(i) = colors.iter().position(|&c| c == usize::MAX) {
        return Err(Error::InvalidArgument(format!("index {i} has no color")));
    }
    Ok(colors)
}

/// Skew-symmetric array of pairwise detectors with their risks.
#[derive(Clone, Debug)]
pub struct PairwiseBattery {
    pub closeness: ClosenessRelation,
    /// `detectors[i][j]` tests `H_i` (positive) against `H_j`.
    pub detectors: Vec<Vec<AffineDetector>>,
    /// Symmetric; 1 on close pairs.
    pub eps: Matrix,
}

impl PairwiseBattery {
    pub fn len(&self) -> usize {
        self.closeness.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closeness.is_empty()
    }

    /// Largest risk over non-close pairs, or `None` when every pair is close.
    pub fn max_risk(&self) -> Option<f64> {
        let j = self.len();
        let mut m: Option<f64> = None;
        for a in 0..j {
            for b in 0..j {
                if !self.closeness.is_close(a, b) {
                    m = Some(m.map_or(self.eps[(a, b)], |x| x.max(self.eps[(a, b)])));
                }
            }
        }
        m
    }
}

/// Battery with Perron–Frobenius shifts for a given `K`.
#[derive(Clone, Debug)]
pub struct ShiftedBattery {
    pub battery: PairwiseBattery,
    /// Skew-symmetric shift matrix.
    pub alpha: Matrix,
    /// `‖E^(K)‖₂,₂`.
    pub eps_hat: f64,
    pub k: usize,
    /// `eps_hat ≥ 1`: the certificate says nothing.
    pub vacuous: bool,
}

/// Solve the `J(J−1)/2` pairwise saddle problems (in parallel) and mirror them.
pub fn build_battery(datas: &[RegularData], closeness: &ClosenessRelation, options: &SolverOptions) -> Result<PairwiseBattery> {
    let j = datas.len();
    if j == 0 {
        return Err(Error::InvalidArgument("empty hypothesis list".into()));
    }
    check_dim("closeness relation", j, closeness.len())?;
    let d = datas[0].obs_dim();
    for x in datas {
        check_dim("hypothesis observation dimension", d, x.obs_dim())?;
    }
    let pairs: Vec<(usize, usize)> = (0..j)
        .flat_map(|a| ((a + 1)..j).map(move |b| (a, b)))
        .filter(|&(a, b)| !closeness.is_close(a, b))
        .collect();
    let solved: Vec<((usize, usize), Result<AffineDetector>)> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let r = SaddleProblem::new(datas[a].clone(), datas[b].clone()).and_then(|p| {
                let p = p.with_options(options.clone());
                let sol = solve_saddle(&p)?;
                build_detector(&sol, &p, false)
            });
            ((a, b), r)
        })
        .collect();
    let mut detectors = vec![vec![AffineDetector::zero(d); j]; j];
    let mut eps = Matrix::from_element(j, j, 1.0);
    let mut failures = Vec::new();
    for ((a, b), r) in solved {
        match r {
            Ok(det) => {
                eps[(a, b)] = det.risk;
                eps[(b, a)] = det.risk;
                detectors[b][a] = det.negated();
                detectors[a][b] = det;
            }
            Err(e) => failures.push(format!("({a}, {b}): {e}")),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Battery(failures.join("; ")));
    }
    Ok(PairwiseBattery {
        closeness: closeness.clone(),
        detectors,
        eps,
    })
}

/// `E^(K)_ij = ε_ij^K` off close pairs, zero on close pairs.
pub fn e_matrix(battery: &PairwiseBattery, k: usize) -> Matrix {
    let j = battery.len();
    Matrix::from_fn(j, j, |a, b| {
        if battery.closeness.is_close(a, b) {
            0.0
        } else {
            battery.eps[(a, b)].powi(k as i32)
        }
    })
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm(e: &Matrix) -> f64 {
    if e.is_empty() {
        return 0.0;
    }
    crate::linalg::eigh(e).eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()))
}

fn perron_vector(e: &Matrix) -> Vector {
    let j = e.nrows();
    let shift = 0.5 * e.row_sum().max();
    let mut g = Vector::from_element(j, 1.0 / (j as f64).sqrt());
    let mut lam_prev = f64::NAN;
    for _ in 0..100_000 {
        let mut next = e * &g + &g * shift;
        let n = next.norm();
        if n == 0.0 {
            return Vector::from_element(j, 1.0);
        }
        next /= n;
        let lam = next.dot(&(e * &next));
        let resid = (e * &next - &next * lam).amax();
        g = next;
        if resid <= 1e-12 * lam.abs().max(1e-300) || (lam - lam_prev).abs() == 0.0 && resid <= 1e-10 {
            return g;
        }
        lam_prev = lam;
    }
    // slow convergence: fall back to a dense eigensolver
    let eig = crate::linalg::eigh(e);
    let mut best = 0;
    for i in 1..j {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    eig.eigenvectors.column(best).map(f64::abs)
}

/// Optimal shifts `α_ij = ln(g_i/g_j)` from the Perron vector `g`, and
/// `eps_hat = ‖E‖₂,₂`.
pub fn perron_shifts(e: &Matrix) -> Result<(Matrix, f64)> {
    let j = e.nrows();
    if e.ncols() != j {
        return Err(Error::InvalidArgument("E must be square".into()));
    }
    if e.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidArgument("E must be entrywise nonnegative and finite".into()));
    }
    let scale = e.amax().max(1.0);
    if (e - e.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidArgument("E must be symmetric".into()));
    }
    let eps_hat = sym_norm(e);
    if e.amax() == 0.0 {
        return Ok((Matrix::zeros(j, j), 0.0));
    }
    let mut g = perron_vector(e);
    if g.iter().any(|&x| x <= 1e-12 * g.amax()) {
        let eta = 1e-12 * (e.amax() + 1.0);
        let perturbed = e.map(|x| x + eta);
        g = perron_vector(&perturbed);
    }
    let g = g.map(|x| x.abs().max(f64::MIN_POSITIVE));
    let alpha = Matrix::from_fn(j, j, |a, b| (g[a] / g[b]).ln());
    let alpha = (&alpha - alpha.transpose()) * 0.5;
    Ok((alpha, eps_hat))
}

pub fn shift_battery(battery: PairwiseBattery, k: usize) -> Result<ShiftedBattery> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let e = e_matrix(&battery, k);
    let (alpha, eps_hat) = perron_shifts(&e)?;
    let vacuous = eps_hat >= 1.0;
    if vacuous {
        log::warn!("multi-test risk bound {eps_hat:.4} ≥ 1 is vacuous");
    }
    Ok(ShiftedBattery { battery, alpha, eps_hat, k, vacuous })
}

/// Indices `i` with `Σ_t φ_ij(ω_t) + α_ij > 0` for every non-close `j`.
pub fn run_multitest(shifted: &ShiftedBattery, observations: &[Vector]) -> Result<Vec<usize>> {
    if observations.len() != shifted.k {
        return Err(Error::InvalidArgument(format!(
            "expected {} observations, got {}",
            shifted.k,
            observations.len()
        )));
    }
    let b = &shifted.battery;
    let j = b.len();
    let mut accepted = Vec::new();
    for i in 0..j {
        let mut ok = true;
        for jj in 0..j {
            if b.closeness.is_close(i, jj) {
                continue;
            }
            let det = &b.detectors[i][jj];
            let mut s = 0.0;
            for w in observations {
                check_dim("observation", det.dim(), w.len())?;
                s += det.eval(w);
            }
            if !(s + shifted.alpha[(i, jj)] > 0.0) {
                ok = false;
                break;
            }
        }
        if ok {
            accepted.push(i);
        }
    }
    Ok(accepted)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorDecision {
    Color(usize),
    Undecided,
}

/// Color of the accepted hypotheses, or `Undecided` when none is accepted.
pub fn infer_color(partition: &[Vec<usize>], shifted: &ShiftedBattery, observations: &[Vector]) -> Result<ColorDecision> {
    let j = shifted.battery.len();
    let colors = colors_of(j, partition)?;
    let expected = ClosenessRelation::from_partition(j, partition)?;
    if expected != shifted.battery.closeness {
        return Err(Error::InvalidArgument("battery closeness is not the same-color relation of the partition".into()));
    }
    let accepted = run_multitest(shifted, observations)?;
    Ok(match accepted.first() {
        Some(&i) => ColorDecision::Color(colors[i]),
        None => ColorDecision::Undecided,
    })
}

/// Smallest `K` with `‖E^(K)‖₂,₂ ≤ target`.
pub fn min_k_for_risk(battery: &PairwiseBattery, target: f64) -> Result<usize> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidArgument(format!("target risk {target} outside (0, 1)")));
    }
    let Some(eps_bar) = battery.max_risk() else {
        return Ok(1);
    };
    if eps_bar >= 1.0 {
        return Err(Error::Infeasible(format!(
            "largest pairwise risk {eps_bar:.6} is not below 1; no repetition count reaches {target}"
        )));
    }
    let j = battery.len() as f64;
    let norm_at = |k: usize| sym_norm(&e_matrix(battery, k));
    let mut hi = ((target / j).ln() / eps_bar.ln()).ceil().max(1.0) as usize;
    while norm_at(hi) > target {
        hi *= 2;
    }
    let mut lo = 1;
    if norm_at(lo) <= target {
        return Ok(1);
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if norm_at(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
