//! JSON problem descriptions and their conversion into library objects.

use std::fmt;

use detector_forge::families::{
    bounded_support_family, discrete_family, gaussian_param_set, poisson_family, sub_gaussian_family,
};
use detector_forge::linalg::{self, Matrix, Vector};
use detector_forge::quadlift::QuadLiftSpec;
use detector_forge::saddle::SolverOptions;
use detector_forge::sets::HalfSpace;
use detector_forge::simulate::Sampler;
use detector_forge::{ConvexSet, RegularData};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: &str = "1";

/// Rows of a dense matrix.
pub type Rows = Vec<Vec<f64>>;

/// A configuration problem located by its JSON path.
#[derive(Debug)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

type CResult<T> = std::result::Result<T, ConfigError>;

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub schema_version: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub families: Vec<FamilyConfig>,
    pub task: TaskConfig,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetConfig {
    Singleton { point: Vec<f64> },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Simplex {
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lo: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hi: Option<Vec<f64>>,
    },
    Intersection { base: std::boxed::Box<SetConfig>, halfspaces: Vec<HalfspaceConfig> },
    /// A single covariance matrix.
    Matrix { value: Rows },
    PsdInterval { lo: Rows, hi: Rows },
}

/// `aᵀx ≤ b`.
#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct HalfspaceConfig {
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Gaussian { mean: SetConfig, cov: SetConfig },
    Poisson { rates: SetConfig },
    Discrete { probs: SetConfig },
    BoundedSupport { support: SetConfig, mean: SetConfig },
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerConfig {
    Gaussian { mean: Vec<f64>, cov: Rows },
    Poisson { rates: Vec<f64> },
    Discrete { probs: Vec<f64> },
}

/// Monte Carlo validation: one sampler per hypothesis.
#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub trials: usize,
    pub samplers: Vec<SamplerConfig>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum DeltaRule {
    #[default]
    Calibrate,
    FastPath,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum QuadModeConfig {
    #[default]
    Best,
    Full,
    Affine,
    Quadratic,
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct QuadHypothesisConfig {
    /// `d × (m+1)`.
    pub a: Rows,
    pub u: SetConfig,
    pub cov: SetConfig,
    pub theta_star: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    Pair {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mc: Option<McConfig>,
    },
    Multitest {
        #[serde(default)]
        close_pairs: Vec<[usize; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_risk: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        observations: Option<Rows>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mc: Option<McConfig>,
    },
    Color {
        partition: Vec<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_risk: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        observations: Option<Rows>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mc: Option<McConfig>,
    },
    Aggregate {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        g: Option<Rows>,
        estimates: Rows,
        k: usize,
        eps: f64,
        #[serde(default)]
        deltas: DeltaRule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        observations: Option<Rows>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mc: Option<AggregateMcConfig>,
    },
    Quadlift {
        hypotheses: Vec<QuadHypothesisConfig>,
        #[serde(default)]
        mode: QuadModeConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mc: Option<McConfig>,
    },
    Simulate {
        k_values: Vec<usize>,
        trials: usize,
        samplers: Vec<SamplerConfig>,
    },
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::Pair { .. } => "pair",
            TaskConfig::Multitest { .. } => "multitest",
            TaskConfig::Color { .. } => "color",
            TaskConfig::Aggregate { .. } => "aggregate",
            TaskConfig::Quadlift { .. } => "quadlift",
            TaskConfig::Simulate { .. } => "simulate",
        }
    }
}

/// Aggregation MC: the true `Gμ̄` and a sampler for the observations.
#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AggregateMcConfig {
    pub trials: usize,
    pub truth: Vec<f64>,
    pub sampler: SamplerConfig,
}

/// JSON Schema of [`ProblemConfig`].
pub fn schema() -> String {
    let mut s = serde_json::to_string_pretty(&schemars::schema_for!(ProblemConfig)).unwrap_or_default();
    s.push('\n');
    s
}

/// Parse JSON text; errors carry the JSON path of the offending value.
pub fn parse(text: &str) -> CResult<ProblemConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ProblemConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        ConfigError::new(path, e.into_inner().to_string())
    })?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(ConfigError::new(
            "schema_version",
            format!("unsupported version {:?}, expected {SCHEMA_VERSION:?}", cfg.schema_version),
        ));
    }
    Ok(cfg)
}

pub fn solver_options(cfg: &SolverConfig, tol_override: Option<f64>) -> CResult<SolverOptions> {
    let mut o = SolverOptions::default();
    if let Some(t) = tol_override.or(cfg.tol) {
        if !(t > 0.0 && t.is_finite()) {
            return Err(ConfigError::new("solver.tol", "tolerance must be positive"));
        }
        o.tol = t;
    }
    if let Some(n) = cfg.max_iter {
        if n == 0 {
            return Err(ConfigError::new("solver.max_iter", "must be positive"));
        }
        o.max_iter = n;
    }
    Ok(o)
}

pub fn vector(xs: &[f64], path: &str) -> CResult<Vector> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(ConfigError::new(path, "entries must be finite"));
    }
    Ok(Vector::from_column_slice(xs))
}

pub fn matrix(rows: &Rows, path: &str) -> CResult<Matrix> {
    let n = rows.len();
    if n == 0 {
        return Err(ConfigError::new(path, "matrix has no rows"));
    }
    let m = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != m) {
        return Err(ConfigError::new(format!("{path}[{i}]"), format!("row has {} entries, expected {m}", rows[i].len())));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|x| !x.is_finite()) {
        return Err(ConfigError::new(path, "entries must be finite"));
    }
    Ok(Matrix::from_row_slice(n, m, &flat))
}

fn square(rows: &Rows, path: &str) -> CResult<Matrix> {
    let a = matrix(rows, path)?;
    if a.nrows() != a.ncols() {
        return Err(ConfigError::new(path, format!("matrix is {}×{}, expected square", a.nrows(), a.ncols())));
    }
    if (&a - a.transpose()).amax() > 1e-9 * a.amax().max(1.0) {
        return Err(ConfigError::new(path, "matrix is not symmetric"));
    }
    Ok(a)
}

fn psd(rows: &Rows, path: &str) -> CResult<Matrix> {
    let a = square(rows, path)?;
    if !linalg::is_psd(&a, 1e-10) {
        return Err(ConfigError::new(path, "matrix is not positive semidefinite"));
    }
    Ok(a)
}

fn lib(path: &str) -> impl Fn(detector_forge::Error) -> ConfigError + '_ {
    move |e| ConfigError::new(path, e.to_string())
}

/// Set in `ℝ^d`; covariance descriptors produce sets of flattened matrices.
pub fn build_set(cfg: &SetConfig, path: &str) -> CResult<ConvexSet> {
    match cfg {
        SetConfig::Singleton { point } => Ok(ConvexSet::singleton(vector(point, &format!("{path}.point"))?)),
        SetConfig::Box { lo, hi } => {
            let lo_v = vector(lo, &format!("{path}.lo"))?;
            let hi_v = vector(hi, &format!("{path}.hi"))?;
            if lo_v.len() != hi_v.len() {
                return Err(ConfigError::new(format!("{path}.hi"), format!("length {} differs from lo ({})", hi_v.len(), lo_v.len())));
            }
            ConvexSet::cuboid(lo_v, hi_v).map_err(lib(path))
        }
        SetConfig::Ball { center, radius } => {
            ConvexSet::ball(vector(center, &format!("{path}.center"))?, *radius).map_err(lib(&format!("{path}.radius")))
        }
        SetConfig::Simplex { dim, lo, hi } => {
            if *dim == 0 {
                return Err(ConfigError::new(format!("{path}.dim"), "must be positive"));
            }
            if lo.is_none() && hi.is_none() {
                return Ok(ConvexSet::simplex(*dim));
            }
            let lo_v = match lo {
                Some(l) => vector(l, &format!("{path}.lo"))?,
                None => Vector::zeros(*dim),
            };
            let hi_v = match hi {
                Some(h) => vector(h, &format!("{path}.hi"))?,
                None => Vector::from_element(*dim, 1.0),
            };
            for (name, v) in [("lo", &lo_v), ("hi", &hi_v)] {
                if v.len() != *dim {
                    return Err(ConfigError::new(format!("{path}.{name}"), format!("length {} differs from dim {dim}", v.len())));
                }
            }
            ConvexSet::bounded_simplex(lo_v, hi_v).map_err(lib(path))
        }
        SetConfig::Intersection { base, halfspaces } => {
            let b = build_set(base, &format!("{path}.base"))?;
            let mut hs = Vec::new();
            for (i, h) in halfspaces.iter().enumerate() {
                let p = format!("{path}.halfspaces[{i}].a");
                let a = vector(&h.a, &p)?;
                if a.len() != b.dim() {
                    return Err(ConfigError::new(p, format!("length {} differs from the base dimension {}", a.len(), b.dim())));
                }
                hs.push(HalfSpace::new(a, h.b));
            }
            let set = ConvexSet::with_halfspaces(b, hs).map_err(lib(path))?;
            if !set.contains(&set.anchor(), 1e-6) {
                return Err(ConfigError::new(path, "intersection is empty"));
            }
            Ok(set)
        }
        SetConfig::Matrix { value } => Ok(ConvexSet::singleton(linalg::vec_of(&psd(value, &format!("{path}.value"))?))),
        SetConfig::PsdInterval { lo, hi } => {
            let l = psd(lo, &format!("{path}.lo"))?;
            let h = psd(hi, &format!("{path}.hi"))?;
            if l.nrows() != h.nrows() {
                return Err(ConfigError::new(format!("{path}.hi"), "size differs from lo"));
            }
            ConvexSet::psd_interval(l, h).map_err(lib(path))
        }
    }
}

fn is_matrix_set(cfg: &SetConfig) -> bool {
    matches!(cfg, SetConfig::Matrix { .. } | SetConfig::PsdInterval { .. })
}

pub fn build_family(cfg: &FamilyConfig, path: &str) -> CResult<RegularData> {
    match cfg {
        FamilyConfig::Gaussian { mean, cov } => {
            let mp = format!("{path}.mean");
            let cp = format!("{path}.cov");
            if is_matrix_set(mean) {
                return Err(ConfigError::new(mp, "mean set must be a vector set"));
            }
            if !is_matrix_set(cov) {
                return Err(ConfigError::new(cp, "covariance must be a matrix or psd_interval"));
            }
            let m = build_set(mean, &mp)?;
            let c = build_set(cov, &cp)?;
            if c.dim() != m.dim() * m.dim() {
                return Err(ConfigError::new(cp, format!("covariance size does not match mean dimension {}", m.dim())));
            }
            let params = gaussian_param_set(m, c).map_err(lib(path))?;
            sub_gaussian_family(params).map_err(lib(path))
        }
        FamilyConfig::Poisson { rates } => {
            let p = format!("{path}.rates");
            poisson_family(vector_set(rates, &p)?).map_err(lib(&p))
        }
        FamilyConfig::Discrete { probs } => {
            let p = format!("{path}.probs");
            discrete_family(vector_set(probs, &p)?).map_err(lib(&p))
        }
        FamilyConfig::BoundedSupport { support, mean } => {
            let sp = format!("{path}.support");
            let x = vector_set(support, &sp)?;
            let m = vector_set(mean, &format!("{path}.mean"))?;
            bounded_support_family(x, m).map_err(lib(path))
        }
    }
}

fn vector_set(cfg: &SetConfig, path: &str) -> CResult<ConvexSet> {
    if is_matrix_set(cfg) {
        return Err(ConfigError::new(path, "expected a vector set"));
    }
    build_set(cfg, path)
}

pub fn build_families(cfg: &ProblemConfig) -> CResult<Vec<RegularData>> {
    let fams: Vec<RegularData> = cfg
        .families
        .iter()
        .enumerate()
        .map(|(i, f)| build_family(f, &format!("families[{i}]")))
        .collect::<CResult<_>>()?;
    if let Some(first) = fams.first() {
        for (i, f) in fams.iter().enumerate() {
            if f.obs_dim() != first.obs_dim() {
                return Err(ConfigError::new(
                    format!("families[{i}]"),
                    format!("observation dimension {} differs from families[0] ({})", f.obs_dim(), first.obs_dim()),
                ));
            }
        }
    }
    Ok(fams)
}

pub fn build_sampler(cfg: &SamplerConfig, seed: u64, path: &str) -> CResult<Sampler> {
    match cfg {
        SamplerConfig::Gaussian { mean, cov } => {
            let m = vector(mean, &format!("{path}.mean"))?;
            let c = psd(cov, &format!("{path}.cov"))?;
            if c.nrows() != m.len() {
                return Err(ConfigError::new(format!("{path}.cov"), "size differs from the mean"));
            }
            Sampler::gaussian(m, &c, seed).map_err(lib(path))
        }
        SamplerConfig::Poisson { rates } => Sampler::poisson(vector(rates, &format!("{path}.rates"))?, seed).map_err(lib(path)),
        SamplerConfig::Discrete { probs } => Sampler::discrete(vector(probs, &format!("{path}.probs"))?, seed).map_err(lib(path)),
    }
}

pub fn build_quad_spec(cfg: &QuadHypothesisConfig, path: &str) -> CResult<QuadLiftSpec> {
    let a = matrix(&cfg.a, &format!("{path}.a"))?;
    let u = vector_set(&cfg.u, &format!("{path}.u"))?;
    let cp = format!("{path}.cov");
    if !is_matrix_set(&cfg.cov) {
        return Err(ConfigError::new(cp, "covariance must be a matrix or psd_interval"));
    }
    let cov = build_set(&cfg.cov, &cp)?;
    let theta = psd(&cfg.theta_star, &format!("{path}.theta_star"))?;
    let spec = QuadLiftSpec::new(a, u, cov, theta).map_err(lib(path))?;
    match cfg.gamma {
        Some(g) => spec.with_gamma(g).map_err(lib(&format!("{path}.gamma"))),
        None => Ok(spec),
    }
}

pub fn observations(rows: &Rows, d: usize, path: &str) -> CResult<Vec<Vector>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let p = format!("{path}[{i}]");
            let v = vector(r, &p)?;
            if v.len() != d {
                return Err(ConfigError::new(p, format!("length {} differs from the observation dimension {d}", v.len())));
            }
            Ok(v)
        })
        .collect()
}
