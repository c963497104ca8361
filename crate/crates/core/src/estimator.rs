//! Recursive momentum (STORM) gradient estimator and the two-sample penalty oracle.

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::model::{ConstraintSystem, EvalMode, ProblemSpec, Vector};

/// The estimator's memory between iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorState {
    pub g: Vector,
    pub last_x: Vector,
    pub last_rho: f64,
    /// Multiplier used at `last_x`; empty when the oracle carries no dual term.
    pub last_lambda: Vector,
}

/// Outcomes drawn once per iteration: one for the objective and two independent
/// constraint outcomes (Jacobian rows from `zeta1`, values from `zeta2`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleBundle {
    pub xi0: usize,
    pub zeta1: usize,
    pub zeta2: usize,
}

impl SampleBundle {
    pub fn draw<R: Rng + ?Sized>(problem: &ProblemSpec, rng: &mut R) -> Self {
        let xi0 = problem.objective().sample_space().draw(rng);
        let (zeta1, zeta2) = match problem.constraints() {
            ConstraintSystem::Stochastic(c) => {
                let z = c.sample_space();
                (z.draw(rng), z.draw(rng))
            }
            _ => (0, 0),
        };
        Self { xi0, zeta1, zeta2 }
    }
}

/// `g_new_at_new + (1 − alpha)(g − g_old_at_old)`. Both oracle values must come
/// from the same sample bundle; that is the caller's contract.
pub fn storm_update(g: &Vector, g_new_at_new: &Vector, g_old_at_old: &Vector, alpha: f64) -> Result<Vector> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Parameter(format!("momentum weight {alpha} outside (0, 1]")));
    }
    check_dim("estimator new sample", g.len(), g_new_at_new.len())?;
    check_dim("estimator old sample", g.len(), g_old_at_old.len())?;
    let mut out = g - g_old_at_old;
    out *= 1.0 - alpha;
    out += g_new_at_new;
    Ok(out)
}

fn check_multiplier(problem: &ProblemSpec, lambda: &Vector) -> Result<()> {
    if lambda.is_empty() {
        Ok(())
    } else {
        check_dim("multiplier", problem.constraint_count(), lambda.len())
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && rho >= 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("penalty parameter {rho} must be finite and nonnegative")))
    }
}

/// Unbiased sample of `∇f + ∇cᵀλ + ρ∇cᵀc`.
///
/// Stochastic constraints take every Jacobian row from `zeta1` and every value
/// from `zeta2`; independence of the two makes the product unbiased.
/// Deterministic constraints are evaluated exactly. An empty `lambda` means no
/// dual term.
pub fn penalty_grad_sample(
    problem: &ProblemSpec,
    x: &Vector,
    lambda: &Vector,
    rho: f64,
    bundle: &SampleBundle,
) -> Result<Vector> {
    check_rho(rho)?;
    check_multiplier(problem, lambda)?;
    let mut grad = problem.sample_grad_f(x, bundle.xi0)?;
    let (jac, val) = match problem.constraints() {
        ConstraintSystem::Unconstrained => return Ok(grad),
        ConstraintSystem::Linear(_) => {
            return Err(Error::Variant(
                "linear constraints are handled by the augmented Lagrangian solver".into(),
            ))
        }
        ConstraintSystem::Deterministic(c) => (c.jacobian(x), c.value(x)),
        ConstraintSystem::Stochastic(_) => {
            let (_, jac) = problem.constraints_eval(x, EvalMode::Sampled(bundle.zeta1))?;
            let (val, _) = problem.constraints_eval(x, EvalMode::Sampled(bundle.zeta2))?;
            (jac, val)
        }
    };
    let mut weights = val * rho;
    if !lambda.is_empty() {
        weights += lambda;
    }
    grad.gemv_tr(1.0, &jac, &weights, 1.0);
    Ok(grad)
}

/// `∇f(x) + ∇c(x)ᵀλ + ρ∇c(x)ᵀc(x)` from exact (enumerated) oracles.
pub fn penalty_grad_exact(problem: &ProblemSpec, x: &Vector, lambda: &Vector, rho: f64) -> Result<Vector> {
    check_rho(rho)?;
    check_multiplier(problem, lambda)?;
    let mut grad = problem.exact_grad_f(x)?;
    if problem.constraint_count() == 0 {
        return Ok(grad);
    }
    let (val, jac) = problem.constraints_eval(x, EvalMode::Exact)?;
    let mut weights = val * rho;
    if !lambda.is_empty() {
        weights += lambda;
    }
    grad.gemv_tr(1.0, &jac, &weights, 1.0);
    Ok(grad)
}

/// `f(x) + λᵀc(x) + (ρ/2)‖c(x)‖²`, when the objective exposes values.
pub fn penalty_value_exact(problem: &ProblemSpec, x: &Vector, lambda: &Vector, rho: f64) -> Result<Option<f64>> {
    check_multiplier(problem, lambda)?;
    let c = problem.constraint_value(x)?;
    let Some(f) = problem.objective_value(x) else {
        return Ok(None);
    };
    let dual = if lambda.is_empty() { 0.0 } else { lambda.dot(&c) };
    Ok(Some(f + dual + 0.5 * rho * c.norm_squared()))
}
