mod common;

use penalty_storm::estimator::{penalty_grad_exact, penalty_grad_sample, storm_update, SampleBundle};
use penalty_storm::model::Vector;
use penalty_storm::problems::{make_stoch_sphere_with, SphereParams};
use penalty_storm::schedules::PenaltySchedule;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn sampled_penalty_gradient_is_unbiased_on_builtins() {
    for p in common::builtin_problems() {
        if p.constraint_count() == 0 || matches!(p.constraints(), penalty_storm::ConstraintSystem::Linear(_)) {
            continue;
        }
        let bias = common::enumeration_bias(&p, 10, 21);
        assert!(bias <= 1e-10, "{}: {bias:e}", p.name());
    }
}

#[test]
fn exact_derivatives_match_finite_differences() {
    for p in common::builtin_problems() {
        let err = common::finite_difference_error(&p, 10, 5);
        assert!(err <= 1e-6, "{}: {err:e}", p.name());
    }
}

#[test]
fn zero_noise_estimator_contracts_geometrically() {
    assert!(common::zero_noise_contraction_gap(1000) <= 1e-12);
}

/// At a fixed point the estimator error follows
/// `E‖e'‖² = (1−α)²E‖e‖² + α²σ²`, where `σ²` is the enumerated oracle variance.
#[test]
fn tracking_error_follows_the_momentum_recursion() {
    let params = SphereParams {
        d: 3,
        ..SphereParams::default()
    };
    let p = make_stoch_sphere_with(&params).unwrap();
    let sched = PenaltySchedule::stochastic(2.0, 4.0).unwrap();
    let x = Vector::from_column_slice(&[0.9, 0.2, -0.5]);
    let lambda = Vector::zeros(0);
    let rho = 2.5;
    let exact = penalty_grad_exact(&p, &x, &lambda, rho).unwrap();

    // enumerated second moment of the oracle around its mean
    let wf = p.objective().sample_space().weights().to_vec();
    let wc = match p.constraints() {
        penalty_storm::ConstraintSystem::Stochastic(c) => c.sample_space().weights().to_vec(),
        _ => unreachable!(),
    };
    let mut var = 0.0;
    for (i, a) in wf.iter().enumerate() {
        for (j, b) in wc.iter().enumerate() {
            for (k, c) in wc.iter().enumerate() {
                let bundle = SampleBundle { xi0: i, zeta1: j, zeta2: k };
                let g = penalty_grad_sample(&p, &x, &lambda, rho, &bundle).unwrap();
                var += a * b * c * (g - &exact).norm_squared();
            }
        }
    }

    let steps = 30u64;
    let seeds = 2000;
    let mut sums = vec![0.0; steps as usize + 1];
    let mut sq = vec![0.0; steps as usize + 1];
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = SampleBundle::draw(&p, &mut rng);
        let mut g = penalty_grad_sample(&p, &x, &lambda, rho, &b).unwrap();
        for j in 0..=steps {
            if j > 0 {
                let b = SampleBundle::draw(&p, &mut rng);
                let s = penalty_grad_sample(&p, &x, &lambda, rho, &b).unwrap();
                g = storm_update(&g, &s, &s, sched.alpha_next(j)).unwrap();
            }
            let e = (&g - &exact).norm_squared();
            sums[j as usize] += e;
            sq[j as usize] += e * e;
        }
    }
    let mut predicted = var;
    for j in 0..=steps as usize {
        if j > 0 {
            let a = sched.alpha_next(j as u64);
            predicted = (1.0 - a).powi(2) * predicted + a * a * var;
        }
        let n = seeds as f64;
        let mean = sums[j] / n;
        let se = ((sq[j] / n - mean * mean).max(0.0) / n).sqrt();
        assert!((mean - predicted).abs() <= 3.0 * se + 1e-12, "step {j}: {mean} vs {predicted} (se {se})");
    }
}
