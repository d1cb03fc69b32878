//! One runner per task type.

use std::fmt;

use detector_forge::aggregation::{AggregationProblem, Aggregator, SubGaussianFastPath};
use detector_forge::detector::{build_detector, AffineDetector};
use detector_forge::linalg::{Matrix, Vector};
use detector_forge::multitest::{
    build_battery, e_matrix, infer_color, min_k_for_risk, run_multitest, shift_battery, ClosenessRelation, ColorDecision,
    ShiftedBattery,
};
use detector_forge::quadlift::{solve_quad_detector, solve_quad_detector_mode, LiftMode, QuadDetector};
use detector_forge::saddle::{solve_saddle, SaddleProblem, SolverOptions};
use detector_forge::simulate::{
    mc_aggregation, mc_color_inference, mc_detector_risk, mc_test_error, Detector, Sampler, Selector, Side, TestUnderTest,
};
use detector_forge::{Error, RegularData};
use serde_json::{json, Value};

use crate::config::{self, ConfigError, DeltaRule, FamilyConfig, McConfig, ProblemConfig, QuadModeConfig, SetConfig, TaskConfig};
use crate::report::{mat_json, mc_table, vec_json, Report, Table};

/// Risk at or above this level is reported as indistinguishable.
pub const INDISTINGUISHABLE: f64 = 1.0 - 1e-9;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Lib { context: String, error: Error },
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Io(_) => 1,
            RunError::Lib { error, .. } => match error {
                Error::InvalidParameter(_)
                | Error::InvalidArgument(_)
                | Error::DimensionMismatch { .. }
                | Error::DegenerateInput(_)
                | Error::Capability(_) => 2,
                Error::Infeasible(_) => 4,
                Error::NonConvergence { .. }
                | Error::SaddleNonConvergence { .. }
                | Error::Uncertified { .. }
                | Error::Battery(_)
                | Error::Domain(_) => 3,
            },
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Lib { context, error } => write!(f, "{context}: {error}"),
            RunError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

type RResult<T> = std::result::Result<T, RunError>;

fn at(context: &str) -> impl Fn(Error) -> RunError + '_ {
    move |error| RunError::Lib { context: context.to_string(), error }
}

/// Seed of the `i`-th sampler of a run.
pub fn derive_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Effective settings after command-line overrides.
pub struct Settings {
    pub seed: u64,
    pub options: SolverOptions,
    /// Build and check inputs only.
    pub dry: bool,
}

pub fn run(cfg: &ProblemConfig, settings: &Settings) -> RResult<Report> {
    let mut echo = cfg.clone();
    echo.seed = settings.seed;
    echo.solver.tol = Some(settings.options.tol);
    let echo = serde_json::to_value(&echo).map_err(|e| RunError::Io(e.to_string()))?;
    let mut report = Report::new(cfg.task.name(), echo);
    let fams = config::build_families(cfg)?;
    match &cfg.task {
        TaskConfig::Pair { mc } => pair(&fams, mc.as_ref(), settings, &mut report)?,
        TaskConfig::Multitest { close_pairs, k, target_risk, observations, mc } => {
            let pairs: Vec<(usize, usize)> = close_pairs.iter().map(|p| (p[0], p[1])).collect();
            let close = ClosenessRelation::from_pairs(fams.len(), &pairs)
                .map_err(|e| ConfigError::new("task.close_pairs", e.to_string()))?;
            let inputs = BatteryInputs { k: *k, target_risk: *target_risk, observations: observations.as_ref(), mc: mc.as_ref() };
            multitest(&fams, close, None, &inputs, settings, &mut report)?
        }
        TaskConfig::Color { partition, k, target_risk, observations, mc } => {
            let close = ClosenessRelation::from_partition(fams.len(), partition)
                .map_err(|e| ConfigError::new("task.partition", e.to_string()))?;
            let inputs = BatteryInputs { k: *k, target_risk: *target_risk, observations: observations.as_ref(), mc: mc.as_ref() };
            multitest(&fams, close, Some(partition), &inputs, settings, &mut report)?
        }
        TaskConfig::Aggregate { .. } => aggregate(cfg, fams, settings, &mut report)?,
        TaskConfig::Quadlift { hypotheses, mode, mc } => quadlift(hypotheses, *mode, mc.as_ref(), settings, &mut report)?,
        TaskConfig::Simulate { k_values, trials, samplers } => {
            simulate(&fams, k_values, *trials, samplers, settings, &mut report)?
        }
    }
    Ok(report)
}

fn need_families(fams: &[RegularData], n: usize, exact: bool) -> RResult<()> {
    let ok = if exact { fams.len() == n } else { fams.len() >= n };
    if ok {
        return Ok(());
    }
    let want = if exact { format!("exactly {n}") } else { format!("at least {n}") };
    Err(ConfigError::new("families", format!("task needs {want} families, got {}", fams.len())).into())
}

fn samplers(cfgs: &[config::SamplerConfig], count: usize, seed: u64, path: &str) -> RResult<Vec<Sampler>> {
    if cfgs.len() != count {
        return Err(ConfigError::new(path, format!("expected {count} samplers, got {}", cfgs.len())).into());
    }
    cfgs.iter()
        .enumerate()
        .map(|(i, c)| config::build_sampler(c, derive_seed(seed, i), &format!("{path}[{i}]")).map_err(RunError::from))
        .collect()
}

fn check_sampler_dims(ss: &[Sampler], d: usize, path: &str) -> RResult<()> {
    for (i, s) in ss.iter().enumerate() {
        if s.dim() != d {
            return Err(ConfigError::new(format!("{path}[{i}]"), format!("sampler dimension {} differs from {d}", s.dim())).into());
        }
    }
    Ok(())
}

fn detector_json(det: &AffineDetector) -> Value {
    json!({ "h": vec_json(&det.h), "a": det.a, "risk": det.risk, "gap": det.gap, "certified": det.certified })
}

fn solve_pair(fams: &[RegularData], settings: &Settings, report: &mut Report) -> RResult<AffineDetector> {
    let p = SaddleProblem::new(fams[0].clone(), fams[1].clone())
        .map_err(|e| ConfigError::new("families", e.to_string()))?
        .with_options(settings.options.clone());
    let sol = solve_saddle(&p).map_err(at("saddle solve"))?;
    let det = build_detector(&sol, &p, false).map_err(at("saddle solve"))?;
    report.set("risk", json!(det.risk));
    report.set("sad_val", json!(sol.sad_val));
    report.set("gap", json!(sol.gap));
    report.set("upper", json!(sol.upper));
    report.set("lower", json!(sol.lower));
    report.set("iterations", json!(sol.iterations));
    report.set("certified", json!(det.certified));
    report.set("detector", json!({ "h": vec_json(&det.h), "a": det.a }));
    report.set("mu1_star", vec_json(&sol.mu1_star));
    report.set("mu2_star", vec_json(&sol.mu2_star));
    if det.risk >= INDISTINGUISHABLE {
        report.warn("hypotheses indistinguishable");
    }
    Ok(det)
}

fn certificate_mc(det: &dyn Detector, mc: &McConfig, seed: u64, report: &mut Report) -> RResult<()> {
    let ss = samplers(&mc.samplers, 2, seed, "task.mc.samplers")?;
    check_sampler_dims(&ss, det.dim(), "task.mc.samplers")?;
    let first = mc_detector_risk(det, &ss[0], Side::First, mc.trials).map_err(at("task.mc"))?;
    let second = mc_detector_risk(det, &ss[1], Side::Second, mc.trials).map_err(at("task.mc"))?;
    for r in [&first, &second] {
        if !r.pass {
            report.warn(format!("MC estimate {:.6} exceeds the certified risk", r.estimate));
        }
    }
    report.table("certificate", mc_table("side", &[(json!("first"), &first), (json!("second"), &second)]));
    Ok(())
}

fn pair(fams: &[RegularData], mc: Option<&McConfig>, settings: &Settings, report: &mut Report) -> RResult<()> {
    need_families(fams, 2, true)?;
    if let Some(mc) = mc {
        let ss = samplers(&mc.samplers, 2, settings.seed, "task.mc.samplers")?;
        check_sampler_dims(&ss, fams[0].obs_dim(), "task.mc.samplers")?;
    }
    if settings.dry {
        return Ok(());
    }
    let det = solve_pair(fams, settings, report)?;
    if let Some(mc) = mc {
        certificate_mc(&det, mc, settings.seed, report)?;
    }
    Ok(())
}

struct BatteryInputs<'a> {
    k: Option<usize>,
    target_risk: Option<f64>,
    observations: Option<&'a config::Rows>,
    mc: Option<&'a McConfig>,
}

fn battery_report(sb: &ShiftedBattery, report: &mut Report) {
    let b = &sb.battery;
    let j = b.len();
    report.set("k", json!(sb.k));
    report.set("eps_hat", json!(sb.eps_hat));
    report.set("vacuous", json!(sb.vacuous));
    report.set("pairwise_risks", mat_json(&b.eps));
    report.set("alpha", mat_json(&sb.alpha));
    let e = e_matrix(b, sb.k);
    let rows: Vec<f64> = (0..j).map(|a| (0..j).map(|c| e[(a, c)] * (-sb.alpha[(a, c)]).exp()).sum()).collect();
    let residual = rows.iter().map(|r| (r - sb.eps_hat).abs()).fold(0.0, f64::max);
    report.set("row_sums", json!(rows));
    report.set("row_residual", json!(residual));
    let mut t = Table::new(&["i", "j", "risk", "a", "certified"]);
    let mut dets = Vec::new();
    for a in 0..j {
        for c in (a + 1)..j {
            if b.closeness.is_close(a, c) {
                continue;
            }
            let d = &b.detectors[a][c];
            t.push(vec![json!(a), json!(c), json!(d.risk), json!(d.a), json!(d.certified)]);
            let mut v = detector_json(d);
            v["i"] = json!(a);
            v["j"] = json!(c);
            dets.push(v);
        }
    }
    report.set("detectors", json!(dets));
    report.table("pairwise", t);
    if sb.vacuous {
        report.warn(format!("multi-test risk bound {:.6} is vacuous", sb.eps_hat));
    }
}

fn multitest(
    fams: &[RegularData],
    close: ClosenessRelation,
    partition: Option<&Vec<Vec<usize>>>,
    inputs: &BatteryInputs<'_>,
    settings: &Settings,
    report: &mut Report,
) -> RResult<()> {
    need_families(fams, 2, false)?;
    let d = fams[0].obs_dim();
    if let Some(t) = inputs.target_risk {
        if !(t > 0.0 && t < 1.0) {
            return Err(ConfigError::new("task.target_risk", "must lie in (0, 1)").into());
        }
    }
    if inputs.k == Some(0) {
        return Err(ConfigError::new("task.k", "must be positive").into());
    }
    let obs = inputs.observations.map(|o| config::observations(o, d, "task.observations")).transpose()?;
    let mc_samplers = match inputs.mc {
        Some(mc) => {
            let ss = samplers(&mc.samplers, fams.len(), settings.seed, "task.mc.samplers")?;
            check_sampler_dims(&ss, d, "task.mc.samplers")?;
            Some(ss)
        }
        None => None,
    };
    if settings.dry {
        return Ok(());
    }
    let battery = build_battery(fams, &close, &settings.options).map_err(at("battery"))?;
    let k = match (inputs.k, inputs.target_risk) {
        (Some(k), _) => k,
        (None, Some(t)) => min_k_for_risk(&battery, t).map_err(at("task.target_risk"))?,
        (None, None) => 1,
    };
    let sb = shift_battery(battery, k).map_err(at("battery"))?;
    battery_report(&sb, report);
    if let Some(obs) = &obs {
        if obs.len() != k {
            return Err(ConfigError::new("task.observations", format!("expected {k} observations, got {}", obs.len())).into());
        }
        let acc = run_multitest(&sb, obs).map_err(at("task.observations"))?;
        report.set("accepted", json!(acc));
        if let Some(p) = partition {
            let dec = infer_color(p, &sb, obs).map_err(at("task.observations"))?;
            report.set(
                "color",
                match dec {
                    ColorDecision::Color(c) => json!(c),
                    ColorDecision::Undecided => json!("undecided"),
                },
            );
        }
    }
    if let (Some(mc), Some(ss)) = (inputs.mc, mc_samplers) {
        let rs = mc_test_error(&TestUnderTest::Battery(&sb), &ss, k, mc.trials).map_err(at("task.mc"))?;
        let rows: Vec<(Value, &_)> = rs.iter().enumerate().map(|(i, r)| (json!(i), r)).collect();
        report.table("c_risk", mc_table("hypothesis", &rows));
        if let Some(p) = partition {
            let rs = mc_color_inference(p, &sb, &ss, mc.trials).map_err(at("task.mc"))?;
            let rows: Vec<(Value, &_)> = rs.iter().enumerate().map(|(i, r)| (json!(i), r)).collect();
            report.table("color", mc_table("hypothesis", &rows));
        }
    }
    Ok(())
}

fn mean_projection(d: usize) -> Matrix {
    let mut g = Matrix::zeros(d, d + d * d);
    for i in 0..d {
        g[(i, i)] = 1.0;
    }
    g
}

fn aggregate(cfg: &ProblemConfig, fams: Vec<RegularData>, settings: &Settings, report: &mut Report) -> RResult<()> {
    let TaskConfig::Aggregate { g, estimates, k, eps, deltas, observations, mc } = &cfg.task else {
        unreachable!()
    };
    need_families(&fams, 1, false)?;
    let all_gaussian = cfg.families.iter().all(|f| matches!(f, FamilyConfig::Gaussian { .. }));
    let gm = match g {
        Some(rows) => config::matrix(rows, "task.g")?,
        None if all_gaussian => mean_projection(fams[0].obs_dim()),
        None => Matrix::identity(fams[0].param_dim(), fams[0].param_dim()),
    };
    let ests: Vec<Vector> = estimates
        .iter()
        .enumerate()
        .map(|(i, e)| config::vector(e, &format!("task.estimates[{i}]")))
        .collect::<Result<_, _>>()?;
    let problem = AggregationProblem::new(fams.clone(), gm, ests.clone(), *k, *eps)
        .map_err(|e| ConfigError::new("task", e.to_string()))?
        .with_options(settings.options.clone());
    let d = fams[0].obs_dim();
    let obs = observations.as_ref().map(|o| config::observations(o, d, "task.observations")).transpose()?;
    if let Some(o) = &obs {
        if o.len() != *k {
            return Err(ConfigError::new("task.observations", format!("expected {k} observations, got {}", o.len())).into());
        }
    }
    let fast = match deltas {
        DeltaRule::FastPath => {
            let [FamilyConfig::Gaussian { mean, cov: SetConfig::Matrix { value } }] = cfg.families.as_slice() else {
                return Err(ConfigError::new("task.deltas", "fast_path needs a single gaussian family with a fixed covariance").into());
            };
            if g.is_some() {
                return Err(ConfigError::new("task.g", "fast_path works on the mean itself").into());
            }
            let m = config::build_set(mean, "families[0].mean")?;
            let theta = config::matrix(value, "families[0].cov.value")?;
            Some(SubGaussianFastPath::new(&m, &theta, &ests, *k, *eps).map_err(|e| ConfigError::new("task", e.to_string()))?)
        }
        DeltaRule::Calibrate => None,
    };
    let mc_sampler = match mc {
        Some(m) => {
            let s = config::build_sampler(&m.sampler, derive_seed(settings.seed, 0), "task.mc.sampler")?;
            check_sampler_dims(std::slice::from_ref(&s), d, "task.mc.sampler")?;
            let truth = config::vector(&m.truth, "task.mc.truth")?;
            if truth.len() != ests[0].len() {
                return Err(ConfigError::new("task.mc.truth", "length differs from the estimates").into());
            }
            Some((s, truth, m.trials))
        }
        None => None,
    };
    if settings.dry {
        return Ok(());
    }
    let selector: Box<dyn Selector> = match fast {
        Some(fp) => {
            report.set("deltas", json!(fp.deltas));
            report.set("kept", json!((0..ests.len()).collect::<Vec<_>>()));
            if let Some(o) = &obs {
                report.set("selected", json!(fp.select(o).map_err(at("task.observations"))?));
            }
            Box::new(fp)
        }
        None => {
            let agg = Aggregator::build(&problem).map_err(at("aggregation"))?;
            report.set("deltas", json!(agg.deltas()));
            report.set("kept", json!(agg.kept));
            let mut t = Table::new(&["cell", "estimate", "delta", "risk", "n_red", "n_blue", "within_budget"]);
            for (ell, p) in agg.procedures.iter().enumerate() {
                let within = agg.calibrations[ell].as_ref().map(|c| c.within_budget);
                if within == Some(false) {
                    report.warn(format!("cell {ell}: risk {:.3e} exceeds its budget", p.risk));
                }
                t.push(vec![json!(ell), json!(agg.kept[ell]), json!(p.delta), json!(p.risk), json!(p.n_red), json!(p.n_blue), json!(within)]);
            }
            report.table("cells", t);
            if let Some(o) = &obs {
                report.set("selected", json!(agg.select(o).map_err(at("task.observations"))?));
            }
            Box::new(agg)
        }
    };
    if let Some((s, truth, trials)) = mc_sampler {
        let r = mc_aggregation(selector.as_ref(), &truth, &s, trials).map_err(at("task.mc"))?;
        report.table("oracle_inequality", mc_table("check", &[(json!("violation"), &r)]));
    }
    Ok(())
}

fn quadlift(
    hyps: &[config::QuadHypothesisConfig],
    mode: QuadModeConfig,
    mc: Option<&McConfig>,
    settings: &Settings,
    report: &mut Report,
) -> RResult<()> {
    if hyps.len() != 2 {
        return Err(ConfigError::new("task.hypotheses", format!("expected 2 hypotheses, got {}", hyps.len())).into());
    }
    let s1 = config::build_quad_spec(&hyps[0], "task.hypotheses[0]")?;
    let s2 = config::build_quad_spec(&hyps[1], "task.hypotheses[1]")?;
    if s1.obs_dim() != s2.obs_dim() {
        return Err(ConfigError::new("task.hypotheses[1].a", "observation dimension differs from hypotheses[0]").into());
    }
    if let Some(mc) = mc {
        let ss = samplers(&mc.samplers, 2, settings.seed, "task.mc.samplers")?;
        check_sampler_dims(&ss, s1.obs_dim(), "task.mc.samplers")?;
    }
    if settings.dry {
        return Ok(());
    }
    let o = &settings.options;
    let det: QuadDetector = match mode {
        QuadModeConfig::Best => solve_quad_detector(&s1, &s2, o),
        QuadModeConfig::Full => solve_quad_detector_mode(&s1, &s2, LiftMode::Full, o),
        QuadModeConfig::Affine => solve_quad_detector_mode(&s1, &s2, LiftMode::AffineOnly, o),
        QuadModeConfig::Quadratic => solve_quad_detector_mode(&s1, &s2, LiftMode::QuadraticOnly, o),
    }
    .map_err(at("quadratic lift"))?;
    report.set("risk", json!(det.risk));
    report.set("gap", json!(det.gap));
    report.set("certified", json!(det.certified));
    report.set("detector", json!({ "h": vec_json(&det.h), "H": mat_json(&det.hmat), "a": det.a }));
    report.set("delta", json!([s1.delta, s2.delta]));
    let quadratic = det.hmat.amax() > 0.0;
    report.set("uses_quadratic_term", json!(quadratic));
    if det.risk >= INDISTINGUISHABLE {
        report.warn("hypotheses indistinguishable");
    }
    if let Some(mc) = mc {
        certificate_mc(&det, mc, settings.seed, report)?;
    }
    Ok(())
}

fn simulate(
    fams: &[RegularData],
    k_values: &[usize],
    trials: usize,
    sampler_cfgs: &[config::SamplerConfig],
    settings: &Settings,
    report: &mut Report,
) -> RResult<()> {
    need_families(fams, 2, true)?;
    if k_values.is_empty() {
        return Err(ConfigError::new("task.k_values", "at least one K is required").into());
    }
    if let Some(i) = k_values.iter().position(|&k| k == 0) {
        return Err(ConfigError::new(format!("task.k_values[{i}]"), "must be positive").into());
    }
    let ss = samplers(sampler_cfgs, 2, settings.seed, "task.samplers")?;
    check_sampler_dims(&ss, fams[0].obs_dim(), "task.samplers")?;
    if settings.dry {
        return Ok(());
    }
    let det = solve_pair(fams, settings, report)?;
    let mut t = Table::new(&["k", "hypothesis", "estimate", "std_error", "n", "bound", "pass"]);
    for &k in k_values {
        let rs = mc_test_error(&TestUnderTest::Pair(&det), &ss, k, trials).map_err(at("task"))?;
        for (i, r) in rs.iter().enumerate() {
            if !r.pass {
                report.warn(format!("K = {k}, hypothesis {i}: error rate {:.6} exceeds its bound", r.estimate));
            }
            t.push(vec![json!(k), json!(i), json!(r.estimate), json!(r.std_error), json!(r.n), json!(r.bound), json!(r.pass)]);
        }
    }
    report.table("error_rates", t);
    Ok(())
}
