//! Stationarity, feasibility, estimator tracking error and potential-function
//! diagnostics. Everything here uses exact (enumerated) oracles.

use crate::error::{check_dim, Error, Result};
use crate::estimator::{penalty_grad_exact, penalty_value_exact};
use crate::model::{ProblemSpec, Vector};
use crate::schedules::{AlmSchedule, DualSchedule, PenaltySchedule};

/// `cone_dist = d(∇f + ∇cᵀλ, −N_X(x))`, `feas = ‖c(x)‖`.
#[derive(Clone, Debug, PartialEq)]
pub struct StationarityReading {
    pub cone_dist: f64,
    pub feas: f64,
    pub lambda_used: Vector,
}

/// Multiplier paired with a point when measuring stationarity.
#[derive(Clone, Copy, Debug)]
pub enum Multiplier<'a> {
    Given(&'a Vector),
    /// `λ = base + ρ·c(x)`, the multiplier implied by a penalty step.
    PenaltyImplied { rho: f64, base: Option<&'a Vector> },
}

pub fn stationarity(problem: &ProblemSpec, x: &Vector, multiplier: Multiplier<'_>) -> Result<StationarityReading> {
    let m = problem.constraint_count();
    let c = problem.constraint_value(x)?;
    let lambda = match multiplier {
        Multiplier::Given(l) => {
            check_dim("multiplier", m, l.len())?;
            l.clone()
        }
        Multiplier::PenaltyImplied { rho, base } => {
            let mut l = &c * rho;
            if let Some(b) = base.filter(|b| !b.is_empty()) {
                check_dim("multiplier", m, b.len())?;
                l += b;
            }
            l
        }
    };
    let grad = penalty_grad_exact(problem, x, &lambda, 0.0)?;
    let cone_dist = problem.set().normal_cone_distance(x, &grad)?;
    Ok(StationarityReading {
        cone_dist,
        feas: c.norm(),
        lambda_used: lambda,
    })
}

/// What the estimator is supposed to track.
#[derive(Clone, Copy, Debug)]
pub enum TrackingTarget<'a> {
    Objective,
    Penalty { rho: f64, lambda: &'a Vector },
}

/// `‖g − ∇f(x)‖` or `‖g − ∇Q_ρ(x, λ)‖`.
pub fn tracking_error(problem: &ProblemSpec, x: &Vector, g: &Vector, target: TrackingTarget<'_>) -> Result<f64> {
    check_dim("estimate", problem.dim(), g.len())?;
    let reference = match target {
        TrackingTarget::Objective => problem.exact_grad_f(x)?,
        TrackingTarget::Penalty { rho, lambda } => penalty_grad_exact(problem, x, lambda, rho)?,
    };
    Ok((g - reference).norm())
}

/// Potential value and the allowance bounding its expected one-step increase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialReading {
    pub y: f64,
    pub allowance: f64,
}

/// Snapshot of consecutive augmented-Lagrangian iterates around index `k ≥ 1`.
#[derive(Clone, Copy, Debug)]
pub struct AlmSnapshot<'a> {
    pub k: u64,
    pub x_prev: &'a Vector,
    pub x: &'a Vector,
    pub lambda: &'a Vector,
    pub g: &'a Vector,
    pub g_prev: &'a Vector,
}

/// Potential of the linear-constraint augmented Lagrangian at index `k`:
///
/// `Y_k = L_ρ(x_k, λ_k) + ρm/(2η_{k+1})‖Ax_k − b‖² + m/(2η_k)‖x_k − x_{k−1}‖²_{Q_k}
///       + β_k‖x_k − x_{k−1}‖² + 2/(cη_k)‖g_k − ∇f(x_k)‖²
///       + (6(1+c₁)/(ρδ) + 4m/(Lη_{k−1}))‖g_{k−1} − ∇f(x_{k−1})‖²`
///
/// with `Q_k = η_k⁻¹I − ρAᵀA`, `L_ρ = f + ⟨λ, Ax − b⟩ + (ρ/2)‖Ax − b‖²`, `m` the
/// step constant and `β_k = (1+c₂+c₃)Lm/η_{k+1} + (48+c₄)(1+c₁)L²/(ρδ) + 28mL/η_k`.
/// The allowance is `v_k V²`.
pub fn potential_alm(problem: &ProblemSpec, sched: &AlmSchedule, snap: AlmSnapshot<'_>) -> Result<PotentialReading> {
    let crate::model::ConstraintSystem::Linear(lin) = problem.constraints() else {
        return Err(Error::Variant("augmented Lagrangian potential needs linear constraints".into()));
    };
    if snap.k == 0 {
        return Err(Error::Diagnostic("potential needs the previous iterate (k ≥ 1)".into()));
    }
    let k = snap.k;
    let t = sched.tuning();
    let (rho, m, l, c, delta) = (sched.rho(), sched.m_const(), sched.l_f(), sched.c(), sched.delta());
    let (eta_prev, eta, eta_next) = (sched.eta(k - 1), sched.eta(k), sched.eta(k + 1));

    let f = problem
        .objective_value(snap.x)
        .ok_or_else(|| Error::Diagnostic("objective values are unavailable".into()))?;
    let r = lin.residual(snap.x);
    let lagrangian = f + snap.lambda.dot(&r) + 0.5 * rho * r.norm_squared();

    let dx = snap.x - snap.x_prev;
    let a_dx = lin.a() * &dx;
    let q_norm = dx.norm_squared() / eta - rho * a_dx.norm_squared();
    let beta = (1.0 + t.c2 + t.c3) * l * m / eta_next
        + (6.0 + t.c4) * (1.0 + t.c1) * l * l / (rho * delta)
        + 42.0 * (1.0 + t.c1) * l * l / (rho * delta)
        + 28.0 * m * l / eta;
    let err = (snap.g - problem.exact_grad_f(snap.x)?).norm_squared();
    let err_prev = (snap.g_prev - problem.exact_grad_f(snap.x_prev)?).norm_squared();

    let y = lagrangian
        + rho * m / (2.0 * eta_next) * r.norm_squared()
        + m / (2.0 * eta) * q_norm
        + beta * dx.norm_squared()
        + 2.0 / (c * eta) * err
        + (6.0 * (1.0 + t.c1) / (rho * delta) + 4.0 * m / (l * eta_prev)) * err_prev;
    let v = problem.constants().v;
    Ok(PotentialReading {
        y,
        allowance: sched.allowance_weight(k) * v * v,
    })
}

/// `Σ_{j=from}^{to−1} v_j V²`: the allowance accumulated between two snapshots.
pub fn alm_allowance_between(problem: &ProblemSpec, sched: &AlmSchedule, from: u64, to: u64) -> f64 {
    let v = problem.constants().v;
    (from..to).map(|j| sched.allowance_weight(j)).sum::<f64>() * v * v
}

/// Potential of the penalty methods at index `p ≥ 1` (after `p − 1` steps):
///
/// `Y_p = Q_{ρ_p}(x_p, λ_p) + (η_{p−1}/α_p)‖g_p − ∇Q_{ρ_p}(x_p, λ_p)‖²`,
///
/// where `η_{p−1}/α_p = 1/(72L̃²ρ_p²η_{p−1})`. The allowance is the explicit
/// one-step error term for the step `p → p+1`.
pub fn potential_penalty(
    problem: &ProblemSpec,
    sched: &PenaltySchedule,
    dual: Option<&DualSchedule>,
    p: u64,
    x: &Vector,
    g: &Vector,
    lambda: &Vector,
) -> Result<PotentialReading> {
    if p == 0 {
        return Err(Error::Diagnostic("penalty potential is indexed from 1".into()));
    }
    let rho = sched.rho(p);
    let q = penalty_value_exact(problem, x, lambda, rho)?
        .ok_or_else(|| Error::Diagnostic("objective values are unavailable".into()))?;
    let err = (g - penalty_grad_exact(problem, x, lambda, rho)?).norm_squared();
    let weight = sched.eta(p - 1) / sched.alpha_next(p - 1);
    Ok(PotentialReading {
        y: q + weight * err,
        allowance: penalty_allowance(problem, sched, dual, p),
    })
}

/// Explicit one-step error term `E_{k+1}` of the penalty methods.
pub fn penalty_allowance(problem: &ProblemSpec, sched: &PenaltySchedule, dual: Option<&DualSchedule>, k: u64) -> f64 {
    let kc = problem.constants();
    let m2 = (problem.constraint_count() as f64).powi(2);
    let lt2 = sched.l_tilde().powi(2);
    let (rho_k, rho_next) = (sched.rho(k), sched.rho(k + 1));
    let alpha = sched.alpha_next(k);
    let denom = lt2 * rho_next * rho_next * sched.eta(k);
    let drift = (rho_next - rho_k).powi(2);
    let noise_c = 2.0 * m2 * rho_k * rho_k * (kc.c_c.powi(2) * kc.sigma_grad_c.powi(2) + kc.c_tilde_grad_c.powi(2) * kc.sigma_c.powi(2));
    match dual {
        None => {
            7.0 * m2 * kc.c_tilde_grad_c.powi(2) * kc.c_tilde_c.powi(2) / (12.0 * denom) * drift
                + alpha * alpha / (12.0 * denom) * (kc.sigma_f.powi(2) + noise_c)
        }
        Some(d) => {
            let gamma_k = d.increment_magnitude(k.max(1));
            let m = problem.constraint_count() as f64;
            7.0 * m2 * kc.c_tilde_grad_c.powi(2) * kc.c_tilde_c.powi(2) / (6.0 * denom) * drift
                + 7.0 * gamma_k * gamma_k * m2 * kc.c_tilde_grad_c.powi(2) / (6.0 * denom)
                + alpha * alpha / (8.0 * denom)
                    * (kc.sigma_f.powi(2)
                        + kc.sigma_grad_c.powi(2)
                            * m2
                            * (2.0 * d.initial_multiplier_norm().powi(2) + 32.0 * m * d.gamma().powi(2))
                        + noise_c)
        }
    }
}
