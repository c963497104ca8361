//! Measurements shared by the integration tests and the acceptance report.
#![allow(dead_code)]

use std::sync::Arc;

use penalty_storm::estimator::{penalty_grad_exact, penalty_grad_sample, storm_update, SampleBundle};
use penalty_storm::model::{
    AssumptionConstants, ConstraintSystem, EvalMode, FeasibleSet, FiniteSum, ProblemSpec, Vector,
};
use penalty_storm::problems::{
    make_sharing, make_sphere_with, make_stoch_sphere_with, Region, SphereConstraint, SphereParams,
};
use penalty_storm::schedules::PenaltySchedule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn builtin_problems() -> Vec<ProblemSpec> {
    vec![
        make_sharing(20, 5, 50, 7).unwrap(),
        make_sphere_with(&SphereParams::default()).unwrap(),
        make_stoch_sphere_with(&SphereParams::default()).unwrap(),
    ]
}

pub fn points(problem: &ProblemSpec, count: usize, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let region = Region::Annulus { inner: 0.5, outer: 2.0 };
    (0..count).map(|_| region.sample(problem.dim(), &mut rng)).collect()
}

/// Largest `‖E[sample] − exact‖ / max(1, ‖exact‖)` over seeded points, with the
/// expectation taken by full enumeration of `(ξ, ζ¹, ζ²)`.
pub fn enumeration_bias(problem: &ProblemSpec, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    let wf = problem.objective().sample_space().weights().to_vec();
    let wc = match problem.constraints() {
        ConstraintSystem::Stochastic(c) => c.sample_space().weights().to_vec(),
        _ => vec![1.0],
    };
    let m = problem.constraint_count();
    let mut worst: f64 = 0.0;
    for x in points(problem, count, seed) {
        let lambda = Vector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
        let rho = rng.random_range(0.0..10.0);
        let mut mean = Vector::zeros(x.len());
        for (i, a) in wf.iter().enumerate() {
            for (j, b) in wc.iter().enumerate() {
                for (k, c) in wc.iter().enumerate() {
                    let bundle = SampleBundle { xi0: i, zeta1: j, zeta2: k };
                    let g = penalty_grad_sample(problem, &x, &lambda, rho, &bundle).unwrap();
                    mean.axpy(a * b * c, &g, 1.0);
                }
            }
        }
        let exact = penalty_grad_exact(problem, &x, &lambda, rho).unwrap();
        worst = worst.max((mean - &exact).norm() / exact.norm().max(1.0));
    }
    worst
}

fn central_difference(f: impl Fn(&Vector) -> f64, x: &Vector) -> Vector {
    let h = 1e-5 * (1.0 + x.norm());
    Vector::from_fn(x.len(), |i, _| {
        let mut up = x.clone();
        let mut dn = x.clone();
        up[i] += h;
        dn[i] -= h;
        (f(&up) - f(&dn)) / (2.0 * h)
    })
}

fn rel(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / b.norm().max(1e-8)
}

/// Largest relative error of exact objective gradients and constraint Jacobian
/// rows against central finite differences of exact values.
pub fn finite_difference_error(problem: &ProblemSpec, count: usize, seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for x in points(problem, count, seed) {
        let g = problem.exact_grad_f(&x).unwrap();
        let fd = central_difference(|y| problem.objective_value(y).unwrap(), &x);
        worst = worst.max(rel(&g, &fd));
        if problem.constraint_count() > 0 {
            let (_, jac) = problem.constraints_eval(&x, EvalMode::Exact).unwrap();
            for i in 0..problem.constraint_count() {
                let fd = central_difference(|y| problem.constraint_value(y).unwrap()[i], &x);
                let row = jac.row(i).transpose();
                worst = worst.max(rel(&row, &fd));
            }
        }
    }
    worst
}

/// Sphere problem with a single-outcome objective, so every oracle is exact.
pub fn deterministic_sphere(d: usize) -> ProblemSpec {
    let anchor = Vector::from_fn(d, |i, _| 0.5 + i as f64 * 0.25);
    let f = FiniteSum::uniform(vec![anchor], 2.0, 0.5).unwrap();
    ProblemSpec::new(
        "det_sphere",
        Arc::new(f),
        ConstraintSystem::Deterministic(Arc::new(SphereConstraint::new(d))),
        FeasibleSet::FullSpace,
        AssumptionConstants::default(),
    )
    .unwrap()
}

/// Zero-noise estimator at a fixed point under the stochastic-penalty momentum
/// weights: the largest gap between the measured error and the predicted
/// `‖g₀ − ∇Q‖∏(1 − αⱼ)` over the first `steps` updates.
pub fn zero_noise_contraction_gap(steps: u64) -> f64 {
    let p = deterministic_sphere(3);
    let sched = PenaltySchedule::stochastic(2.0, 4.0).unwrap();
    let x = Vector::from_column_slice(&[0.4, -0.8, 1.1]);
    let lambda = Vector::zeros(0);
    let rho = 3.0;
    let target = penalty_grad_exact(&p, &x, &lambda, rho).unwrap();
    let bundle = SampleBundle { xi0: 0, zeta1: 0, zeta2: 0 };
    let mut g = &target + Vector::from_column_slice(&[1.5, -2.0, 0.5]);
    let mut predicted = (&g - &target).norm();
    let mut worst: f64 = 0.0;
    for j in 1..=steps {
        let alpha = sched.alpha_next(j - 1);
        let sample = penalty_grad_sample(&p, &x, &lambda, rho, &bundle).unwrap();
        g = storm_update(&g, &sample, &sample, alpha).unwrap();
        predicted *= 1.0 - alpha;
        worst = worst.max(((&g - &target).norm() - predicted).abs());
    }
    worst
}
