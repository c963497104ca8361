//! Single-loop drivers: one projected (stochastic) gradient step on the
//! augmented Lagrangian or penalty function plus one estimator update.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{penalty_grad_sample, storm_update, EstimatorState, SampleBundle};
use crate::metrics::{
    potential_alm, potential_penalty, stationarity, tracking_error, AlmSnapshot, Multiplier, StationarityReading,
    TrackingTarget,
};
use crate::model::{ConstraintSystem, FeasibleSet, ProblemSpec, Vector};
use crate::schedules::{AlmSchedule, AlmStep, DualSchedule, PenaltySchedule, PenaltyStep};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Augmented Lagrangian for linear constraints, unprojected.
    LinAlm,
    /// Projected quadratic penalty with an increasing penalty.
    StochQp,
    /// Quadratic penalty plus decaying dual updates.
    StochAlm,
    /// Quadratic penalty for exactly known constraints.
    DetQp,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::LinAlm => "lin_alm",
            Self::StochQp => "stoch_qp",
            Self::StochAlm => "stoch_alm",
            Self::DetQp => "det_qp",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    Alm(AlmSchedule),
    Penalty(PenaltySchedule),
    Dual(DualSchedule),
}

/// Step size, penalty and momentum sequences consumed by the penalty step.
pub trait PenaltyParams {
    fn eta(&self, k: u64) -> f64;
    fn rho(&self, k: u64) -> f64;
    /// `α_{k+1}`.
    fn alpha_next(&self, k: u64) -> f64;
}

/// Constant parameters, for tests and hand-tuned experiments.
impl PenaltyParams for PenaltyStep {
    fn eta(&self, _k: u64) -> f64 {
        self.eta
    }
    fn rho(&self, _k: u64) -> f64 {
        self.rho
    }
    fn alpha_next(&self, _k: u64) -> f64 {
        self.alpha_next
    }
}

/// Parameters of augmented-Lagrangian step `k`.
pub trait AlmParams {
    fn at(&self, k: u64) -> AlmStep;
}

impl AlmParams for AlmSchedule {
    fn at(&self, k: u64) -> AlmStep {
        AlmSchedule::at(self, k)
    }
}

impl AlmParams for AlmStep {
    fn at(&self, _k: u64) -> AlmStep {
        *self
    }
}

impl PenaltyParams for PenaltySchedule {
    fn eta(&self, k: u64) -> f64 {
        PenaltySchedule::eta(self, k)
    }
    fn rho(&self, k: u64) -> f64 {
        PenaltySchedule::rho(self, k)
    }
    fn alpha_next(&self, k: u64) -> f64 {
        PenaltySchedule::alpha_next(self, k)
    }
}

/// Everything needed to take the next step.
///
/// `k` counts steps taken. For the augmented Lagrangian, `x`, `lambda` and
/// `estimator.g` are `x_k`, `λ_k`, `g_k`. For the penalty methods the iterate is
/// `x_p` with `p = k + 1`; `estimator.last_lambda` is the multiplier `λ_p` paired
/// with `x_p`, and `lambda` is the already computed `λ_{p+1}` (empty without
/// dual updates).
#[derive(Clone, Debug)]
pub struct SolverState {
    pub x: Vector,
    pub prev_x: Vector,
    pub lambda: Vector,
    pub initial_lambda: Vector,
    pub estimator: EstimatorState,
    pub prev_g: Vector,
    pub k: u64,
    rng: ChaCha8Rng,
}

impl SolverState {
    fn finite(&self) -> bool {
        self.x.iter().chain(self.estimator.g.iter()).chain(self.lambda.iter()).all(|v| v.is_finite())
    }
}

fn solver_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for the output index, so the selection does not perturb
/// the solver's samples.
pub fn selection_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Uniform draw from `{1, …, K}`.
pub fn select_output<R: Rng + ?Sized>(k_total: u64, rng: &mut R) -> Result<u64> {
    if k_total == 0 {
        return Err(Error::Parameter("output selection needs K ≥ 1".into()));
    }
    Ok(rng.random_range(1..=k_total))
}

fn require_linear(problem: &ProblemSpec) -> Result<&crate::model::LinearConstraints> {
    match problem.constraints() {
        ConstraintSystem::Linear(l) => {
            if *problem.set() != FeasibleSet::FullSpace {
                return Err(Error::Variant("the linear-constraint solver is unprojected; X must be the full space".into()));
            }
            Ok(l)
        }
        other => Err(Error::Variant(format!("linear-constraint solver got {} constraints", other.kind()))),
    }
}

/// `x₀` from the problem, `λ₀ = 0`, `g₀ = ∇̃f(x₀, ξ₀)` from one draw.
pub fn init_alm(problem: &ProblemSpec, seed: u64) -> Result<SolverState> {
    let lin = require_linear(problem)?;
    let mut rng = solver_rng(seed);
    let x = problem.initial_point();
    let xi = problem.objective().sample_space().draw(&mut rng);
    let g = problem.sample_grad_f(&x, xi)?;
    let lambda = Vector::zeros(lin.a().nrows());
    Ok(SolverState {
        prev_x: x.clone(),
        estimator: EstimatorState {
            g: g.clone(),
            last_x: x.clone(),
            last_rho: 0.0,
            last_lambda: Vector::zeros(0),
        },
        prev_g: g,
        initial_lambda: lambda.clone(),
        lambda,
        x,
        k: 0,
        rng,
    })
}

/// One augmented-Lagrangian step, in order:
/// `x' = x − η_{k+1}(g + Aᵀλ + ρAᵀ(Ax − b))`, `λ' = λ + ρ(Ax' − b)`, draw `ξ`,
/// `g' = ∇̃f(x', ξ) + (1 − α_{k+1})(g − ∇̃f(x, ξ))`.
pub fn step_alm<P: AlmParams>(state: &mut SolverState, problem: &ProblemSpec, sched: &P) -> Result<()> {
    let lin = require_linear(problem)?;
    let step = sched.at(state.k + 1);
    let a = lin.a();
    let mut weights = lin.residual(&state.x) * step.rho;
    weights += &state.lambda;
    let mut dir = state.estimator.g.clone();
    dir.gemv_tr(1.0, a, &weights, 1.0);
    let x_new = &state.x - dir * step.eta;
    let r_new = lin.residual(&x_new);
    state.lambda.axpy(step.rho, &r_new, 1.0);

    let xi = problem.objective().sample_space().draw(&mut state.rng);
    let new = problem.sample_grad_f(&x_new, xi)?;
    let old = problem.sample_grad_f(&state.x, xi)?;
    let g_new = storm_update(&state.estimator.g, &new, &old, step.alpha)?;

    state.prev_x = std::mem::replace(&mut state.x, x_new);
    state.prev_g = std::mem::replace(&mut state.estimator.g, g_new);
    state.estimator.last_x = state.x.clone();
    state.estimator.last_rho = step.rho;
    state.k += 1;
    Ok(())
}

fn require_penalty_constraints(problem: &ProblemSpec, exact_only: bool) -> Result<()> {
    match problem.constraints() {
        ConstraintSystem::Deterministic(_) => Ok(()),
        ConstraintSystem::Stochastic(_) if !exact_only => Ok(()),
        other => Err(Error::Variant(format!(
            "penalty solver{} got {} constraints",
            if exact_only { " for exact constraints" } else { "" },
            other.kind()
        ))),
    }
}

fn constraint_sample(problem: &ProblemSpec, x: &Vector, bundle: &SampleBundle) -> Vector {
    match problem.constraints() {
        ConstraintSystem::Stochastic(c) => c.value_sample(x, bundle.zeta2),
        other => other.exact_value(x),
    }
}

fn dual_advance(lambda: &mut Vector, dual: &DualSchedule, k: u64, c_sample: &Vector) {
    for (l, c) in lambda.iter_mut().zip(c_sample.iter()) {
        *l += dual.dual_increment(k, *c);
    }
}

/// Initial state of the penalty methods: `x₁ = x₀ ∈ X`, `g₁ = ∇̃Q_{ρ₁}(x₁, λ₁, B₁)`
/// and, with dual updates, `λ₂ = λ₁ + γ₁c̃(x₁, ζ²₁)`.
pub fn init_penalty<P: PenaltyParams>(
    problem: &ProblemSpec,
    sched: &P,
    dual: Option<&DualSchedule>,
    seed: u64,
) -> Result<SolverState> {
    require_penalty_constraints(problem, false)?;
    let m = problem.constraint_count();
    let mut rng = solver_rng(seed);
    let x = problem.initial_point();
    let lambda1 = match dual {
        Some(d) if !d.initial_multiplier().is_empty() => {
            crate::error::check_dim("initial multiplier", m, d.initial_multiplier().len())?;
            Vector::from_column_slice(d.initial_multiplier())
        }
        Some(_) => Vector::zeros(m),
        None => Vector::zeros(0),
    };
    let bundle = SampleBundle::draw(problem, &mut rng);
    let rho1 = sched.rho(1);
    let g = penalty_grad_sample(problem, &x, &lambda1, rho1, &bundle)?;
    let mut lambda2 = lambda1.clone();
    if let Some(d) = dual {
        dual_advance(&mut lambda2, d, 1, &constraint_sample(problem, &x, &bundle));
    }
    Ok(SolverState {
        prev_x: x.clone(),
        estimator: EstimatorState {
            g: g.clone(),
            last_x: x.clone(),
            last_rho: rho1,
            last_lambda: lambda1.clone(),
        },
        prev_g: g,
        initial_lambda: lambda1,
        lambda: lambda2,
        x,
        k: 0,
        rng,
    })
}

/// One penalty step at index `p = k + 1`:
/// `x_{p+1} = P_X(x_p − η_p g_p)`, draw `B_{p+1}` with independent `ζ¹, ζ²`,
/// `g_{p+1} = ∇̃Q_{ρ_{p+1}}(x_{p+1}, λ_{p+1}, B) + (1 − α_{p+1})(g_p − ∇̃Q_{ρ_p}(x_p, λ_p, B))`,
/// then with dual updates `λ_{p+2} = λ_{p+1} + γ_{p+1}c̃(x_{p+1}, ζ²)`.
pub fn step_penalty<P: PenaltyParams>(
    state: &mut SolverState,
    problem: &ProblemSpec,
    sched: &P,
    dual: Option<&DualSchedule>,
) -> Result<()> {
    require_penalty_constraints(problem, false)?;
    let p = state.k + 1;
    let eta = sched.eta(p);
    let x_new = problem.set().project(&(&state.x - &state.estimator.g * eta))?;
    let bundle = SampleBundle::draw(problem, &mut state.rng);
    let rho_next = sched.rho(p + 1);
    let new = penalty_grad_sample(problem, &x_new, &state.lambda, rho_next, &bundle)?;
    let old = penalty_grad_sample(
        problem,
        &state.x,
        &state.estimator.last_lambda,
        state.estimator.last_rho,
        &bundle,
    )?;
    let g_new = storm_update(&state.estimator.g, &new, &old, sched.alpha_next(p))?;

    let mut lambda_after = state.lambda.clone();
    if let Some(d) = dual {
        dual_advance(&mut lambda_after, d, p + 1, &constraint_sample(problem, &x_new, &bundle));
    }
    state.estimator.last_lambda = std::mem::replace(&mut state.lambda, lambda_after);
    state.estimator.last_rho = rho_next;
    state.estimator.last_x = x_new.clone();
    state.prev_x = std::mem::replace(&mut state.x, x_new);
    state.prev_g = std::mem::replace(&mut state.estimator.g, g_new);
    state.k += 1;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub kind: SolverKind,
    pub schedule: Schedule,
    /// Number of steps `K`.
    pub iterations: u64,
    pub seed: u64,
    /// Trace rows at multiples of `stride` (plus the first and last iterate).
    pub stride: u64,
    /// Evaluate the potential function at trace rows.
    pub potential: bool,
    /// Store elapsed wall-clock time in the trace (breaks byte-identical reruns).
    pub record_wall_time: bool,
}

/// One snapshot of a run.
///
/// `eta`, `rho`, `alpha` are the parameters of the step taken from this row;
/// `scaled_step` is `‖x_k − x_{k−1}‖` divided by the step size that produced
/// `x_k` (zero at `k = 0`). `potential` and `allowance` are empty unless
/// potentials are enabled and defined at this index.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub k: u64,
    pub eta: f64,
    pub rho: f64,
    pub alpha: f64,
    pub feas: f64,
    pub cone_dist: f64,
    pub tracking_err: f64,
    pub scaled_step: f64,
    pub potential: Option<f64>,
    pub allowance: Option<f64>,
    pub objective: Option<f64>,
    pub wall_nanos: u64,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub kind: SolverKind,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    pub steps_taken: u64,
    /// Output index drawn uniformly from `{1, …, K}`.
    pub selected_index: u64,
    /// Stationarity of the iterate after `selected_index` steps.
    pub selected: Option<StationarityReading>,
    pub final_x: Vector,
    pub final_lambda: Vector,
    /// Dual-update runs: steps at which some `|λᵢ|` exceeded `|λ₁ᵢ| + 4γ`.
    pub dual_bound_violations: u64,
    /// Largest `|λᵢ| − |λ₁ᵢ|` seen, in units of `γ` (dual-update runs only).
    pub max_dual_excursion: f64,
    pub aborted: Option<String>,
}

fn check_config(problem: &ProblemSpec, cfg: &RunConfig) -> Result<()> {
    if cfg.iterations == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if cfg.stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    match (cfg.kind, &cfg.schedule) {
        (SolverKind::LinAlm, Schedule::Alm(_)) => require_linear(problem).map(|_| ()),
        (SolverKind::StochQp, Schedule::Penalty(_)) => require_penalty_constraints(problem, false),
        (SolverKind::DetQp, Schedule::Penalty(_)) => require_penalty_constraints(problem, true),
        (SolverKind::StochAlm, Schedule::Dual(_)) => require_penalty_constraints(problem, false),
        (kind, _) => Err(Error::Config(format!("schedule does not match solver {}", kind.name()))),
    }
}

/// Per-row diagnostics computed from the current state.
fn trace_row(problem: &ProblemSpec, cfg: &RunConfig, state: &SolverState, started: Instant) -> Result<TraceRow> {
    let k = state.k;
    let x = &state.x;
    let g = &state.estimator.g;
    let wall_nanos = if cfg.record_wall_time {
        started.elapsed().as_nanos() as u64
    } else {
        0
    };
    let objective = problem.objective_value(x);
    let dx = (x - &state.prev_x).norm();
    match &cfg.schedule {
        Schedule::Alm(s) => {
            let step = s.at(k + 1);
            let st = stationarity(problem, x, Multiplier::Given(&state.lambda))?;
            let tracking_err = tracking_error(problem, x, g, TrackingTarget::Objective)?;
            let scaled_step = if k == 0 { 0.0 } else { dx / s.eta(k) };
            let pot = if cfg.potential && k >= 1 {
                Some(potential_alm(
                    problem,
                    s,
                    AlmSnapshot {
                        k,
                        x_prev: &state.prev_x,
                        x,
                        lambda: &state.lambda,
                        g,
                        g_prev: &state.prev_g,
                    },
                )?)
            } else {
                None
            };
            Ok(TraceRow {
                k,
                eta: step.eta,
                rho: step.rho,
                alpha: step.alpha,
                feas: st.feas,
                cone_dist: st.cone_dist,
                tracking_err,
                scaled_step,
                potential: pot.map(|p| p.y),
                allowance: pot.map(|p| p.allowance),
                objective,
                wall_nanos,
            })
        }
        Schedule::Penalty(_) | Schedule::Dual(_) => {
            let (sched, dual) = match &cfg.schedule {
                Schedule::Penalty(s) => (s, None),
                Schedule::Dual(d) => (d.penalty(), Some(d)),
                Schedule::Alm(_) => unreachable!(),
            };
            let p = k + 1;
            let lambda_p = &state.estimator.last_lambda;
            let st = stationarity(problem, x, implied_multiplier(sched, lambda_p, k))?;
            let tracking_err = tracking_error(
                problem,
                x,
                g,
                TrackingTarget::Penalty {
                    rho: sched.rho(p),
                    lambda: lambda_p,
                },
            )?;
            let scaled_step = if k == 0 { 0.0 } else { dx / sched.eta(k) };
            let pot = if cfg.potential {
                Some(potential_penalty(problem, sched, dual, p, x, g, lambda_p)?)
            } else {
                None
            };
            Ok(TraceRow {
                k,
                eta: sched.eta(p),
                rho: sched.rho(p),
                alpha: sched.alpha_next(p),
                feas: st.feas,
                cone_dist: st.cone_dist,
                tracking_err,
                scaled_step,
                potential: pot.map(|p| p.y),
                allowance: pot.map(|p| p.allowance),
                objective,
                wall_nanos,
            })
        }
    }
}

/// The multiplier certifying stationarity of `x_p` after `k = p − 1` steps:
/// `λ_p + ρ_{p−1}c(x_p)` (`ρ₁` before the first step).
fn implied_multiplier<'a>(sched: &PenaltySchedule, lambda_p: &'a Vector, k: u64) -> Multiplier<'a> {
    Multiplier::PenaltyImplied {
        rho: sched.rho(k.max(1)),
        base: if lambda_p.is_empty() { None } else { Some(lambda_p) },
    }
}

fn selected_reading(problem: &ProblemSpec, cfg: &RunConfig, state: &SolverState) -> Result<StationarityReading> {
    match &cfg.schedule {
        Schedule::Alm(_) => stationarity(problem, &state.x, Multiplier::Given(&state.lambda)),
        Schedule::Penalty(s) => stationarity(problem, &state.x, implied_multiplier(s, &state.estimator.last_lambda, state.k)),
        Schedule::Dual(d) => stationarity(
            problem,
            &state.x,
            implied_multiplier(d.penalty(), &state.estimator.last_lambda, state.k),
        ),
    }
}

fn abort_row(k: u64) -> TraceRow {
    TraceRow {
        k,
        eta: f64::NAN,
        rho: f64::NAN,
        alpha: f64::NAN,
        feas: f64::NAN,
        cone_dist: f64::NAN,
        tracking_err: f64::NAN,
        scaled_step: f64::NAN,
        potential: None,
        allowance: None,
        objective: None,
        wall_nanos: 0,
    }
}

/// Run `K` steps from the problem's initial point, recording trace rows at the
/// stride grid. Deterministic given the seed.
pub fn run(problem: &ProblemSpec, cfg: &RunConfig) -> Result<RunReport> {
    check_config(problem, cfg)?;
    let started = Instant::now();
    let selected_index = select_output(cfg.iterations, &mut selection_rng(cfg.seed))?;
    let mut state = match &cfg.schedule {
        Schedule::Alm(_) => init_alm(problem, cfg.seed)?,
        Schedule::Penalty(s) => init_penalty(problem, s, None, cfg.seed)?,
        Schedule::Dual(d) => init_penalty(problem, d.penalty(), Some(d), cfg.seed)?,
    };
    let mut report = RunReport {
        kind: cfg.kind,
        seed: cfg.seed,
        rows: Vec::with_capacity((cfg.iterations / cfg.stride + 2) as usize),
        steps_taken: 0,
        selected_index,
        selected: None,
        final_x: Vector::zeros(0),
        final_lambda: Vector::zeros(0),
        dual_bound_violations: 0,
        max_dual_excursion: 0.0,
        aborted: None,
    };
    let dual = match &cfg.schedule {
        Schedule::Dual(d) => Some(d),
        _ => None,
    };
    if let Some(d) = dual {
        track_dual_bound(&mut report, &state, d);
    }
    report.rows.push(trace_row(problem, cfg, &state, started)?);

    while state.k < cfg.iterations {
        match &cfg.schedule {
            Schedule::Alm(s) => step_alm(&mut state, problem, s)?,
            Schedule::Penalty(s) => step_penalty(&mut state, problem, s, None)?,
            Schedule::Dual(d) => step_penalty(&mut state, problem, d.penalty(), Some(d))?,
        }
        if !state.finite() {
            let msg = format!("non-finite iterate after step {}", state.k);
            log::warn!("{msg} (seed {})", cfg.seed);
            report.rows.push(abort_row(state.k));
            report.aborted = Some(msg);
            break;
        }
        if let Some(d) = dual {
            track_dual_bound(&mut report, &state, d);
        }
        if state.k == selected_index {
            report.selected = Some(selected_reading(problem, cfg, &state)?);
        }
        if state.k % cfg.stride == 0 || state.k == cfg.iterations {
            report.rows.push(trace_row(problem, cfg, &state, started)?);
        }
    }
    report.steps_taken = state.k;
    report.final_x = state.x;
    report.final_lambda = state.lambda;
    Ok(report)
}

fn track_dual_bound(report: &mut RunReport, state: &SolverState, dual: &DualSchedule) {
    let gamma = dual.gamma();
    let mut violated = false;
    for (l, l1) in state.lambda.iter().zip(state.initial_lambda.iter()) {
        let excursion = l.abs() - l1.abs();
        report.max_dual_excursion = report.max_dual_excursion.max(excursion / gamma);
        if l.abs() > l1.abs() + 4.0 * gamma {
            violated = true;
        }
    }
    if violated {
        report.dual_bound_violations += 1;
    }
}
