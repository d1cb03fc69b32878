//! Samplers and Monte Carlo checks of the certified bounds.
//!
//! Streams come from ChaCha8 (a counter-based stream cipher generator)
//! seeded with the 64-bit seed; trial chunk `c` of 1000 trials uses stream
//! number `c`, so results do not depend on the number of worker threads.
//! Poisson variates use inversion for means up to 30 and the PTRS
//! transformed-rejection method above.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::aggregation::{Aggregator, SubGaussianFastPath};
use crate::detector::AffineDetector;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::multitest::{infer_color, run_multitest, ColorDecision, ShiftedBattery};
use crate::quadlift::QuadDetector;

pub const CHUNK: usize = 1000;
pub const DEFAULT_SE_MULTIPLIER: f64 = 3.0;
pub const MIN_TRIALS: usize = 1000;

/// I.i.d. draws from a user distribution.
pub trait ObservationOracle: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut dyn RngCore) -> Vector;
}

/// Conditional law of `ζ_t` given the history `ζ_1…ζ_{t−1}`.
pub trait ScenarioOracle: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, history: &[Vector], rng: &mut dyn RngCore) -> Vector;
}

#[derive(Clone, Debug)]
pub enum SamplerKind {
    Gaussian { mean: Vector, factor: Matrix },
    Poisson { mu: Vector },
    /// Basic-orth encoding of a distribution on `{1…d}`.
    Discrete { cumulative: Vec<f64> },
    Custom(Arc<dyn ObservationOracle>),
    Scenario(Arc<dyn ScenarioOracle>),
}

#[derive(Clone, Debug)]
pub struct Sampler {
    pub kind: SamplerKind,
    pub seed: u64,
    dim: usize,
}

impl Sampler {
    /// `N(mean, cov)`; `cov` only needs to be positive semidefinite.
    pub fn gaussian(mean: Vector, cov: &Matrix, seed: u64) -> Result<Self> {
        let d = mean.len();
        check_dim("covariance", d, cov.nrows())?;
        if !linalg::is_psd(cov, 1e-10) {
            return Err(Error::InvalidParameter("covariance is not positive semidefinite".into()));
        }
        let factor = linalg::sqrtm_psd(cov);
        Ok(Self { kind: SamplerKind::Gaussian { mean, factor }, seed, dim: d })
    }

    pub fn poisson(mu: Vector, seed: u64) -> Result<Self> {
        if mu.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidParameter("Poisson means must be finite and nonnegative".into()));
        }
        let d = mu.len();
        Ok(Self { kind: SamplerKind::Poisson { mu }, seed, dim: d })
    }

    pub fn discrete(mu: Vector, seed: u64) -> Result<Self> {
        if mu.iter().any(|&m| !(m >= 0.0)) || (mu.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("discrete law must be a probability vector".into()));
        }
        let mut acc = 0.0;
        let cumulative = mu
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { kind: SamplerKind::Discrete { cumulative }, seed, dim: mu.len() })
    }

    pub fn custom(oracle: Arc<dyn ObservationOracle>, seed: u64) -> Self {
        let dim = oracle.dim();
        Self { kind: SamplerKind::Custom(oracle), seed, dim }
    }

    pub fn scenario(oracle: Arc<dyn ScenarioOracle>, seed: u64) -> Self {
        let dim = oracle.dim();
        Self { kind: SamplerKind::Scenario(oracle), seed, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Generator for stream `stream` of this sampler's seed.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// One draw given the history of the current trajectory.
    pub fn draw(&self, history: &[Vector], rng: &mut ChaCha8Rng) -> Vector {
        match &self.kind {
            SamplerKind::Gaussian { mean, factor } => {
                let z = Vector::from_iterator(self.dim, (0..self.dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
                mean + factor * z
            }
            SamplerKind::Poisson { mu } => Vector::from_iterator(self.dim, mu.iter().map(|&m| poisson(m, rng) as f64)),
            SamplerKind::Discrete { cumulative } => {
                let u: f64 = rng.random();
                let total = *cumulative.last().unwrap_or(&1.0);
                let idx = cumulative.partition_point(|&c| c <= u * total).min(self.dim - 1);
                let mut e = Vector::zeros(self.dim);
                e[idx] = 1.0;
                e
            }
            SamplerKind::Custom(o) => o.sample(rng),
            SamplerKind::Scenario(o) => o.sample(history, rng),
        }
    }

    /// A trajectory of `k` observations.
    pub fn trajectory(&self, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vector> {
        let mut out: Vec<Vector> = Vec::with_capacity(k);
        for _ in 0..k {
            let w = self.draw(&out, rng);
            out.push(w);
        }
        out
    }

    /// The first `n` observations of stream 0.
    pub fn stream(&self, n: usize) -> Vec<Vector> {
        let mut rng = self.rng(0);
        self.trajectory(n, &mut rng)
    }
}

/// Poisson variate with mean `lambda`.
pub fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    match Poisson::new(lambda) {
        Ok(dist) => dist.sample(rng) as u64,
        Err(_) => 0,
    }
}

/// Monte Carlo estimate compared with a certified value.
#[derive(Clone, Debug, PartialEq)]
pub struct McReport {
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
    pub bound: Option<f64>,
    pub pass: bool,
}

impl McReport {
    pub fn new(estimate: f64, std_error: f64, n: usize, bound: Option<f64>, se_multiplier: f64) -> Self {
        let pass = bound.map_or(true, |b| estimate <= b + se_multiplier * std_error);
        Self { estimate, std_error, n, bound, pass }
    }

    fn from_moments(sum: f64, sumsq: f64, n: usize, bound: Option<f64>) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 { ((sumsq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
        Self::new(mean, (var / nf).sqrt(), n, bound, DEFAULT_SE_MULTIPLIER)
    }
}

/// Run `n` trials, each given a generator positioned for its chunk.
fn run_trials<F>(sampler: &Sampler, n: usize, trial: F) -> Result<(f64, f64)>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Result<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(n - c * CHUNK);
            let mut rng = sampler.rng(c as u64);
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..count {
                let x = trial(&mut rng)?;
                sum += x;
                sumsq += x * x;
            }
            Ok((sum, sumsq))
        })
        .collect();
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for p in parts {
        let (s, q) = p?;
        sum += s;
        sumsq += q;
    }
    Ok((sum, sumsq))
}

/// Detector evaluated on single observations.
pub trait Detector: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, omega: &Vector) -> f64;
    /// Certified single-observation risk.
    fn risk(&self) -> f64;
}

impl Detector for AffineDetector {
    fn dim(&self) -> usize {
        AffineDetector::dim(self)
    }
    fn eval(&self, omega: &Vector) -> f64 {
        AffineDetector::eval(self, omega)
    }
    fn risk(&self) -> f64 {
        self.risk
    }
}

impl Detector for QuadDetector {
    fn dim(&self) -> usize {
        QuadDetector::dim(self)
    }
    fn eval(&self, omega: &Vector) -> f64 {
        QuadDetector::eval(self, omega)
    }
    fn risk(&self) -> f64 {
        self.risk
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Observations from the first hypothesis: estimate `E e^{−φ}`.
    First,
    /// Observations from the second hypothesis: estimate `E e^{φ}`.
    Second,
}

/// MC estimate of `E e^{∓φ}` against the detector's risk.
pub fn mc_detector_risk(det: &dyn Detector, sampler: &Sampler, side: Side, n: usize) -> Result<McReport> {
    check_dim("sampler dimension", det.dim(), sampler.dim())?;
    if n < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!("at least {MIN_TRIALS} samples are required, got {n}")));
    }
    let sign = match side {
        Side::First => -1.0,
        Side::Second => 1.0,
    };
    let (s, q) = run_trials(sampler, n, |rng| Ok((sign * det.eval(&sampler.draw(&[], rng))).exp()))?;
    Ok(McReport::from_moments(s, q, n, Some(det.risk())))
}

/// MC estimate of `ln E exp{hᵀζ + ½ζᵀHζ}` with a delta-method standard error.
pub fn mc_log_mgf(sampler: &Sampler, h: &Vector, hmat: &Matrix, bound: Option<f64>, n: usize) -> Result<McReport> {
    check_dim("sampler dimension", h.len(), sampler.dim())?;
    if n < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!("at least {MIN_TRIALS} samples are required, got {n}")));
    }
    let (s, q) = run_trials(sampler, n, |rng| {
        let z = sampler.draw(&[], rng);
        Ok((h.dot(&z) + 0.5 * z.dot(&(hmat * &z))).exp())
    })?;
    let raw = McReport::from_moments(s, q, n, None);
    let est = raw.estimate.ln();
    let se = raw.std_error / raw.estimate;
    Ok(McReport::new(est, se, n, bound, DEFAULT_SE_MULTIPLIER))
}

/// A test whose error rates are checked.
pub enum TestUnderTest<'a> {
    /// `K`-repeated pairwise test from one detector; bound `ε*^K`.
    Pair(&'a dyn Detector),
    /// Multi-hypothesis test from a shifted battery; bound `eps_hat`.
    Battery(&'a ShiftedBattery),
}

/// Per-hypothesis frequency of wrong or incomplete acceptance.
pub fn mc_test_error(test: &TestUnderTest<'_>, samplers: &[Sampler], k: usize, trials: usize) -> Result<Vec<McReport>> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!("at least {MIN_TRIALS} trials are required, got {trials}")));
    }
    match test {
        TestUnderTest::Pair(det) => {
            check_dim("sampler count", 2, samplers.len())?;
            let bound = det.risk().powi(k as i32);
            samplers
                .iter()
                .enumerate()
                .map(|(idx, s)| {
                    check_dim("sampler dimension", det.dim(), s.dim())?;
                    let (sum, sq) = run_trials(s, trials, |rng| {
                        let obs = s.trajectory(k, rng);
                        let stat: f64 = obs.iter().map(|w| det.eval(w)).sum();
                        let wrong = if idx == 0 { stat < 0.0 } else { stat >= 0.0 };
                        Ok(if wrong { 1.0 } else { 0.0 })
                    })?;
                    Ok(McReport::from_moments(sum, sq, trials, Some(bound)))
                })
                .collect()
        }
        TestUnderTest::Battery(sb) => {
            check_dim("sampler count", sb.battery.len(), samplers.len())?;
            if sb.k != k {
                return Err(Error::InvalidArgument(format!("battery was shifted for K = {}, not {k}", sb.k)));
            }
            let close = &sb.battery.closeness;
            samplers
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    let (sum, sq) = run_trials(s, trials, |rng| {
                        let obs = s.trajectory(k, rng);
                        let acc = run_multitest(sb, &obs)?;
                        let wrong = !acc.contains(&j) || acc.iter().any(|&i| !close.is_close(i, j));
                        Ok(if wrong { 1.0 } else { 0.0 })
                    })?;
                    Ok(McReport::from_moments(sum, sq, trials, Some(sb.eps_hat)))
                })
                .collect()
        }
    }
}

/// Per-hypothesis frequency of not recovering the color.
pub fn mc_color_inference(
    partition: &[Vec<usize>],
    shifted: &ShiftedBattery,
    samplers: &[Sampler],
    trials: usize,
) -> Result<Vec<McReport>> {
    check_dim("sampler count", shifted.battery.len(), samplers.len())?;
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!("at least {MIN_TRIALS} trials are required, got {trials}")));
    }
    let mut color = vec![usize::MAX; shifted.battery.len()];
    for (c, block) in partition.iter().enumerate() {
        for &i in block {
            if i < color.len() {
                color[i] = c;
            }
        }
    }
    samplers
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let (sum, sq) = run_trials(s, trials, |rng| {
                let obs = s.trajectory(shifted.k, rng);
                let wrong = infer_color(partition, shifted, &obs)? != ColorDecision::Color(color[j]);
                Ok(if wrong { 1.0 } else { 0.0 })
            })?;
            Ok(McReport::from_moments(sum, sq, trials, Some(shifted.eps_hat)))
        })
        .collect()
}

/// An aggregation routine that picks one of its candidate estimates.
pub trait Selector: Send + Sync {
    fn k(&self) -> usize;
    fn eps(&self) -> f64;
    fn max_delta(&self) -> f64;
    /// Candidate estimates the minimum is taken over.
    fn candidates(&self) -> Vec<Vector>;
    fn select_estimate(&self, observations: &[Vector]) -> Result<Vector>;
}

impl Selector for Aggregator {
    fn k(&self) -> usize {
        self.problem.k
    }
    fn eps(&self) -> f64 {
        self.problem.eps
    }
    fn max_delta(&self) -> f64 {
        Aggregator::max_delta(self)
    }
    fn candidates(&self) -> Vec<Vector> {
        self.problem.estimates.clone()
    }
    fn select_estimate(&self, observations: &[Vector]) -> Result<Vector> {
        let idx = self.select(observations)?;
        let pos = self.kept.iter().position(|&i| i == idx).unwrap_or(0);
        Ok(self.problem.estimates[pos].clone())
    }
}

impl Selector for SubGaussianFastPath {
    fn k(&self) -> usize {
        self.k
    }
    fn eps(&self) -> f64 {
        self.eps
    }
    fn max_delta(&self) -> f64 {
        self.deltas.iter().cloned().fold(0.0, f64::max)
    }
    fn candidates(&self) -> Vec<Vector> {
        self.estimates.clone()
    }
    fn select_estimate(&self, observations: &[Vector]) -> Result<Vector> {
        Ok(self.estimates[self.select(observations)?].clone())
    }
}

/// Frequency of `‖Gμ̄ − ĝ‖ > min_ℓ ‖Gμ̄ − g_ℓ‖ + 2 max_ℓ δ_ℓ`, against `eps`.
pub fn mc_aggregation(selector: &dyn Selector, g_truth: &Vector, sampler: &Sampler, trials: usize) -> Result<McReport> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!("at least {MIN_TRIALS} trials are required, got {trials}")));
    }
    let cands = selector.candidates();
    if let Some(c) = cands.first() {
        check_dim("truth Gμ̄", c.len(), g_truth.len())?;
    }
    let best = cands.iter().map(|c| (c - g_truth).norm()).fold(f64::INFINITY, f64::min);
    let slack = best + 2.0 * selector.max_delta();
    let k = selector.k();
    let (sum, sq) = run_trials(sampler, trials, |rng| {
        let obs = sampler.trajectory(k, rng);
        let chosen = selector.select_estimate(&obs)?;
        Ok(if (&chosen - g_truth).norm() > slack * (1.0 + 1e-12) { 1.0 } else { 0.0 })
    })?;
    Ok(McReport::from_moments(sum, sq, trials, Some(selector.eps())))
}
