//! Experiment runner: JSON config in, one CSV trace per seed plus a JSONL
//! summary out, and log-log rate fits over traces.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::model::{
    AssumptionConstants, ConstraintSystem, FeasibleSet, FiniteSum, LinearConstraints, Matrix, ProblemSpec, SampleSpace,
    Vector,
};
use crate::problems::{
    self, estimate_constants, make_sharing_with, make_sphere_with, make_stoch_sphere_with, EstimateOptions,
    NoisySphereConstraint, Region, SharingParams, SphereConstraint, SphereParams,
};
use crate::schedules::{
    l_tilde, validate_alm_schedule, AlmSchedule, AlmTuning, DualSchedule, PenaltyRegime, PenaltySchedule,
    ScheduleValidation, SmoothnessRegime,
};
use crate::solvers::{run, RunConfig, RunReport, Schedule, SolverKind, TraceRow};

/// Environment variable capping the number of seeds run concurrently.
pub const THREADS_ENV: &str = "PENALTY_STORM_THREADS";

/// Trace CSV header, in column order.
pub const TRACE_HEADER: [&str; 12] = [
    "k",
    "eta_k",
    "rho_k",
    "alpha_k",
    "feas",
    "cone_dist",
    "tracking_err",
    "potential_Y",
    "allowance",
    "objective",
    "wall_nanos",
    "scaled_step",
];

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveDoc {
    pub anchors: Vec<Vec<f64>>,
    /// Component probabilities; uniform when absent.
    pub weights: Option<Vec<f64>>,
    pub curvature: f64,
    pub nonconvexity: f64,
}

impl Default for ObjectiveDoc {
    fn default() -> Self {
        Self {
            anchors: Vec::new(),
            weights: None,
            curvature: 1.0,
            nonconvexity: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConstraintDoc {
    None,
    Linear { a: Vec<Vec<f64>>, b: Vec<f64> },
    Sphere,
    NoisySphere { value_noise: Vec<f64>, jacobian_noise: Vec<f64> },
}

/// A user-described problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomProblem {
    #[serde(default)]
    pub name: Option<String>,
    pub objective: ObjectiveDoc,
    pub constraints: ConstraintDoc,
    #[serde(default = "full_space")]
    pub set: FeasibleSet,
    /// Constants are estimated on `region` when absent.
    #[serde(default)]
    pub constants: Option<AssumptionConstants>,
    #[serde(default)]
    pub region: Option<Region>,
    #[serde(default)]
    pub initial_point: Option<Vec<f64>>,
}

fn full_space() -> FeasibleSet {
    FeasibleSet::FullSpace
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    Sharing(SharingParams),
    Sphere(SphereParams),
    StochSphere(SphereParams),
    Custom(CustomProblem),
}

impl ProblemConfig {
    pub fn build(&self) -> Result<ProblemSpec> {
        match self {
            Self::Sharing(p) => make_sharing_with(p),
            Self::Sphere(p) => make_sphere_with(p),
            Self::StochSphere(p) => make_stoch_sphere_with(p),
            Self::Custom(c) => build_custom(c),
        }
    }
}

fn build_custom(doc: &CustomProblem) -> Result<ProblemSpec> {
    let o = &doc.objective;
    if o.anchors.is_empty() {
        return Err(Error::Config("objective needs at least one anchor".into()));
    }
    let anchors: Vec<Vector> = o.anchors.iter().map(|a| Vector::from_column_slice(a)).collect();
    let d = anchors[0].len();
    let space = match &o.weights {
        Some(w) => SampleSpace::new(w.clone())?,
        None => SampleSpace::uniform(anchors.len())?,
    };
    let objective = FiniteSum::new(anchors, space, o.curvature, o.nonconvexity)?;
    let constraints = match &doc.constraints {
        ConstraintDoc::None => ConstraintSystem::Unconstrained,
        ConstraintDoc::Linear { a, b } => {
            let rows = a.len();
            if rows == 0 || a.iter().any(|r| r.len() != d) {
                return Err(Error::Config(format!("linear constraint rows must have length {d}")));
            }
            let flat: Vec<f64> = a.iter().flatten().copied().collect();
            let a = Matrix::from_row_slice(rows, d, &flat);
            ConstraintSystem::Linear(LinearConstraints::new(a, Vector::from_column_slice(b))?)
        }
        ConstraintDoc::Sphere => ConstraintSystem::Deterministic(Arc::new(SphereConstraint::new(d))),
        ConstraintDoc::NoisySphere {
            value_noise,
            jacobian_noise,
        } => ConstraintSystem::Stochastic(Arc::new(NoisySphereConstraint::new(
            d,
            value_noise.clone(),
            jacobian_noise.clone(),
        )?)),
    };
    let default_region = match doc.constraints {
        ConstraintDoc::Sphere | ConstraintDoc::NoisySphere { .. } => Region::Annulus { inner: 0.5, outer: 3.0 },
        _ => Region::cube(d, 5.0),
    };
    let name = doc.name.clone().unwrap_or_else(|| "custom".into());
    let mut problem = ProblemSpec::new(
        name,
        Arc::new(objective),
        constraints,
        doc.set.clone(),
        AssumptionConstants::default(),
    )?;
    let constants = match &doc.constants {
        Some(k) => k.clone(),
        None => estimate_constants(
            &problem,
            doc.region.as_ref().unwrap_or(&default_region),
            EstimateOptions::default(),
        )?,
    };
    problem = problem.with_constants(constants)?;
    if let Some(x0) = &doc.initial_point {
        problem = problem.with_initial_point(Vector::from_column_slice(x0))?;
    }
    Ok(problem)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleConfig {
    /// Linear-constraint augmented Lagrangian schedule.
    Alm {
        #[serde(default = "one")]
        c1: f64,
        #[serde(default = "one")]
        c2: f64,
        #[serde(default = "one")]
        c3: f64,
        #[serde(default = "one")]
        c4: f64,
        /// Override of the step-size offset.
        #[serde(default)]
        k0: Option<f64>,
    },
    /// Increasing penalty; the regime defaults to the solver's.
    Penalty {
        rho: f64,
        #[serde(default)]
        regime: Option<PenaltyRegime>,
        #[serde(default)]
        l_tilde: Option<f64>,
    },
    Dual {
        rho: f64,
        gamma: f64,
        #[serde(default)]
        regime: Option<PenaltyRegime>,
        #[serde(default)]
        l_tilde: Option<f64>,
        #[serde(default)]
        initial_multiplier: Option<Vec<f64>>,
    },
}

impl ScheduleConfig {
    pub fn build(&self, problem: &ProblemSpec, kind: SolverKind) -> Result<Schedule> {
        let default_regime = if kind == SolverKind::DetQp {
            PenaltyRegime::Deterministic
        } else {
            PenaltyRegime::Stochastic
        };
        let smoothness = |regime: PenaltyRegime| match regime {
            PenaltyRegime::Stochastic => SmoothnessRegime::Stochastic,
            PenaltyRegime::Deterministic => SmoothnessRegime::Deterministic,
        };
        let m = problem.constraint_count();
        match self {
            Self::Alm { c1, c2, c3, c4, k0 } => {
                let ConstraintSystem::Linear(lin) = problem.constraints() else {
                    return Err(Error::Config("alm schedule needs linear constraints".into()));
                };
                let tuning = AlmTuning {
                    c1: *c1,
                    c2: *c2,
                    c3: *c3,
                    c4: *c4,
                };
                let mut s = AlmSchedule::new(problem.constants().l_f, lin.delta(), lin.norm(), tuning)?;
                if let Some(k0) = k0 {
                    s = s.with_k0(*k0)?;
                }
                Ok(Schedule::Alm(s))
            }
            Self::Penalty { rho, regime, l_tilde: lt } => {
                let regime = regime.unwrap_or(default_regime);
                let lt = match lt {
                    Some(v) => *v,
                    None => l_tilde(problem.constants(), m, smoothness(regime))?,
                };
                Ok(Schedule::Penalty(PenaltySchedule::new(regime, *rho, lt)?))
            }
            Self::Dual {
                rho,
                gamma,
                regime,
                l_tilde: lt,
                initial_multiplier,
            } => {
                let regime = regime.unwrap_or(default_regime);
                let lambda1 = initial_multiplier.clone().unwrap_or_default();
                let norm = lambda1.iter().map(|v| v * v).sum::<f64>().sqrt();
                let lt = match lt {
                    Some(v) => *v,
                    None => l_tilde(
                        problem.constants(),
                        m,
                        SmoothnessRegime::Dual {
                            initial_multiplier_norm: norm,
                        },
                    )?,
                };
                let penalty = PenaltySchedule::new(regime, *rho, lt)?;
                Ok(Schedule::Dual(
                    DualSchedule::new(*gamma, penalty)?.with_initial_multiplier(lambda1)?,
                ))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub solver: SolverKind,
    pub schedule: ScheduleConfig,
    #[serde(rename = "K")]
    pub iterations: u64,
    pub seeds: Vec<u64>,
    pub stride: u64,
    pub outdir: PathBuf,
    #[serde(default)]
    pub potential: bool,
    #[serde(default)]
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.iterations < 10 {
            return Err(Error::Config("K must be at least 10".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn run_config(&self, problem: &ProblemSpec, seed: u64) -> Result<RunConfig> {
        Ok(RunConfig {
            kind: self.solver,
            schedule: self.schedule.build(problem, self.solver)?,
            iterations: self.iterations,
            seed,
            stride: self.stride,
            potential: self.potential,
            record_wall_time: self.record_wall_time,
        })
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn row_record(r: &TraceRow) -> [String; 12] {
    [
        r.k.to_string(),
        fmt_f64(r.eta),
        fmt_f64(r.rho),
        fmt_f64(r.alpha),
        fmt_f64(r.feas),
        fmt_f64(r.cone_dist),
        fmt_f64(r.tracking_err),
        fmt_opt(r.potential),
        fmt_opt(r.allowance),
        fmt_opt(r.objective),
        r.wall_nanos.to_string(),
        fmt_f64(r.scaled_step),
    ]
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record(row_record(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn trace_path(outdir: &Path, seed: u64) -> PathBuf {
    outdir.join(format!("trace_seed{seed}.csv"))
}

pub fn summary_path(outdir: &Path) -> PathBuf {
    outdir.join("summary.jsonl")
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub reports: Vec<RunReport>,
    pub trace_paths: Vec<PathBuf>,
    pub summary_path: PathBuf,
}

impl ExperimentOutcome {
    pub fn any_aborted(&self) -> bool {
        self.reports.iter().any(|r| r.aborted.is_some())
    }
}

/// Median of finite values; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn thread_count() -> Option<usize> {
    let raw = std::env::var(THREADS_ENV).ok()?;
    match raw.trim().parse::<usize>() {
        Ok(n) if n >= 1 => Some(n),
        _ => {
            log::warn!("ignoring {THREADS_ENV}={raw:?}; expected a positive integer");
            None
        }
    }
}

/// Run every seed of `cfg` against an already built problem.
pub fn run_seeds(problem: &ProblemSpec, cfg: &ExperimentConfig) -> Result<Vec<RunReport>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| run(problem, &cfg.run_config(problem, seed)?))
            .collect()
    })
}

/// Build the problem, run all seeds, write `trace_seed<seed>.csv` files and
/// `summary.jsonl` into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let problem = cfg.problem.build()?;
    let reports = run_seeds(&problem, cfg)?;
    fs::create_dir_all(&cfg.outdir)?;
    let mut trace_paths = Vec::with_capacity(reports.len());
    for r in &reports {
        let path = trace_path(&cfg.outdir, r.seed);
        write_trace(&path, &r.rows)?;
        trace_paths.push(path);
    }
    let summary = summary_path(&cfg.outdir);
    write_summary(&summary, &problem, cfg, &reports)?;
    Ok(ExperimentOutcome {
        reports,
        trace_paths,
        summary_path: summary,
    })
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

fn write_summary(path: &Path, problem: &ProblemSpec, cfg: &ExperimentConfig, reports: &[RunReport]) -> Result<()> {
    let mut out = fs::File::create(path)?;
    let mut sel_cone = Vec::new();
    let mut sel_feas = Vec::new();
    let mut fin_cone = Vec::new();
    let mut fin_feas = Vec::new();
    for r in reports {
        let (cone, feas) = r
            .selected
            .as_ref()
            .map(|s| (s.cone_dist, s.feas))
            .unwrap_or((f64::NAN, f64::NAN));
        let last = r.rows.last();
        let (lc, lf) = last.map(|l| (l.cone_dist, l.feas)).unwrap_or((f64::NAN, f64::NAN));
        sel_cone.push(cone);
        sel_feas.push(feas);
        fin_cone.push(lc);
        fin_feas.push(lf);
        let rec = json!({
            "record": "run",
            "problem": problem.name(),
            "solver": cfg.solver.name(),
            "seed": r.seed,
            "steps": r.steps_taken,
            "selected_index": r.selected_index,
            "selected_cone_dist": finite_or_null(cone),
            "selected_feas": finite_or_null(feas),
            "final_cone_dist": finite_or_null(lc),
            "final_feas": finite_or_null(lf),
            "dual_bound_violations": r.dual_bound_violations,
            "aborted": r.aborted,
        });
        writeln!(out, "{rec}")?;
    }
    let med = |v: &[f64]| median(v).map(|m| json!(m)).unwrap_or(serde_json::Value::Null);
    let agg = json!({
        "record": "aggregate",
        "runs": reports.len(),
        "aborted": reports.iter().filter(|r| r.aborted.is_some()).count(),
        "median_selected_cone_dist": med(&sel_cone),
        "median_selected_feas": med(&sel_feas),
        "median_final_cone_dist": med(&fin_cone),
        "median_final_feas": med(&fin_feas),
    });
    writeln!(out, "{agg}")?;
    Ok(())
}

/// Result of a log-log least-squares fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// How the fitted series is formed from the column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitSeries {
    /// `(1/n)Σ` of the column over the recorded rows with `k ≥ 1` up to each `k`.
    RunningAverage,
    /// The column itself.
    Raw,
}

/// A sum of columns or squared columns, e.g. `cone_dist^2+feas^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnExpr {
    terms: Vec<(String, i32)>,
}

impl ColumnExpr {
    pub fn parse(expr: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for raw in expr.split('+') {
            let t = raw.trim();
            let (name, power) = match t.split_once('^') {
                Some((n, p)) => {
                    let p: i32 = p
                        .trim()
                        .parse()
                        .map_err(|_| Error::Fit(format!("bad exponent in term {t:?}")))?;
                    (n.trim(), p)
                }
                None => (t, 1),
            };
            if !TRACE_HEADER.contains(&name) || name.is_empty() {
                return Err(Error::Fit(format!("unknown column {name:?}")));
            }
            terms.push((name.to_string(), power));
        }
        Ok(Self { terms })
    }

    fn indices(&self, headers: &csv::StringRecord) -> Result<Vec<(usize, i32)>> {
        self.terms
            .iter()
            .map(|(name, p)| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .map(|i| (i, *p))
                    .ok_or_else(|| Error::Fit(format!("column {name:?} missing from trace")))
            })
            .collect()
    }
}

/// `(k, value)` pairs of one trace; rows with empty or unparsable terms get NaN.
pub fn read_series(path: &Path, expr: &ColumnExpr) -> Result<Vec<(u64, f64)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let k_idx = headers
        .iter()
        .position(|h| h == "k")
        .ok_or_else(|| Error::Fit("trace has no k column".into()))?;
    let idx = expr.indices(&headers)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let k: u64 = rec[k_idx]
            .parse()
            .map_err(|_| Error::Fit(format!("bad k value {:?}", &rec[k_idx])))?;
        let mut value = 0.0;
        for (i, p) in &idx {
            value += rec[*i].parse::<f64>().unwrap_or(f64::NAN).powi(*p);
        }
        out.push((k, value));
    }
    Ok(out)
}

/// Ordinary least squares of `ln y` on `ln k`.
pub fn loglog_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 8 {
        return Err(Error::Fit(format!("need at least 8 usable rows, found {}", points.len())));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(k, _)| k.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, y)| y.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all rows share one k".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit {
        slope,
        intercept,
        r2,
        points: points.len(),
    })
}

/// Fit the decay exponent of `series` formed from `expr`, averaged across files
/// at the `k` values every file records, over `k ∈ [k_min, k_max]`.
/// Rows with `k = 0`, nonpositive or non-finite values are skipped.
pub fn fit_rate<P: AsRef<Path>>(
    files: &[P],
    expr: &str,
    k_min: u64,
    k_max: u64,
    series: FitSeries,
) -> Result<RateFit> {
    if files.is_empty() {
        return Err(Error::Fit("no trace files given".into()));
    }
    let expr = ColumnExpr::parse(expr)?;
    let mut all = Vec::with_capacity(files.len());
    for f in files {
        all.push(read_series(f.as_ref(), &expr)?);
    }
    let averaged = average_across(&all);
    fit_series(&averaged, k_min, k_max, series)
}

/// Mean across traces at the `k` values present in every trace.
pub fn average_across(traces: &[Vec<(u64, f64)>]) -> Vec<(u64, f64)> {
    let Some(first) = traces.first() else {
        return Vec::new();
    };
    let maps: Vec<std::collections::BTreeMap<u64, f64>> =
        traces.iter().map(|t| t.iter().copied().collect()).collect();
    first
        .iter()
        .filter_map(|(k, _)| {
            let vals: Option<Vec<f64>> = maps.iter().map(|m| m.get(k).copied()).collect();
            vals.map(|v| (*k, v.iter().sum::<f64>() / v.len() as f64))
        })
        .collect()
}

/// Fit one already averaged series.
pub fn fit_series(rows: &[(u64, f64)], k_min: u64, k_max: u64, series: FitSeries) -> Result<RateFit> {
    let mut usable: Vec<(u64, f64)> = rows
        .iter()
        .copied()
        .filter(|(k, v)| *k >= 1 && v.is_finite() && *v > 0.0)
        .collect();
    usable.sort_by_key(|(k, _)| *k);
    let mut points = Vec::new();
    let mut total = 0.0;
    for (i, (k, v)) in usable.iter().enumerate() {
        total += v;
        let y = match series {
            FitSeries::RunningAverage => total / (i + 1) as f64,
            FitSeries::Raw => *v,
        };
        if *k >= k_min && *k <= k_max {
            points.push((*k as f64, y));
        }
    }
    loglog_fit(&points)
}

/// Validation outcome printed by `validate-schedule`.
#[derive(Clone, Debug)]
pub enum ScheduleReport {
    Alm {
        schedule: AlmSchedule,
        validation: ScheduleValidation,
    },
    Penalty {
        schedule: Schedule,
        /// Largest relative deviation of `α_{k+1}` from `72L̃²ρ_{k+1}²η_k²` over the checked range.
        identity_error: f64,
    },
}

impl ScheduleReport {
    pub fn ok(&self) -> bool {
        match self {
            Self::Alm { validation, .. } => validation.all_pass(),
            Self::Penalty { identity_error, .. } => *identity_error < 1e-12,
        }
    }
}

/// Build the configured schedule and check its defining properties.
pub fn validate_schedule(problem: &ProblemSpec, cfg: &ExperimentConfig, k_max: u64) -> Result<ScheduleReport> {
    match cfg.schedule.build(problem, cfg.solver)? {
        Schedule::Alm(s) => {
            let validation = validate_alm_schedule(&s, k_max)?;
            Ok(ScheduleReport::Alm { schedule: s, validation })
        }
        other => {
            let p = match &other {
                Schedule::Penalty(p) => *p,
                Schedule::Dual(d) => *d.penalty(),
                Schedule::Alm(_) => unreachable!(),
            };
            let lt2 = p.l_tilde().powi(2);
            let identity_error = crate::schedules::validation_grid(k_max)
                .into_iter()
                .map(|k| {
                    let lhs = 72.0 * lt2 * p.rho(k + 1).powi(2) * p.eta(k).powi(2);
                    (lhs - p.alpha_next(k)).abs() / p.alpha_next(k)
                })
                .fold(0.0, f64::max);
            Ok(ScheduleReport::Penalty {
                schedule: other,
                identity_error,
            })
        }
    }
}

pub fn builtin_problems() -> &'static [(&'static str, &'static str)] {
    problems::BUILTIN_PROBLEMS
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_expr_parsing() {
        let e = ColumnExpr::parse("cone_dist^2+feas^2").unwrap();
        assert_eq!(e.terms, vec![("cone_dist".into(), 2), ("feas".into(), 2)]);
        assert!(ColumnExpr::parse("nope").is_err());
        assert!(ColumnExpr::parse("feas^x").is_err());
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[f64::NAN]), None);
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1e-300, 123456.789, -2.5e10] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }
}
