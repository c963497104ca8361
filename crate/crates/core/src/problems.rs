//! Built-in test problems and sampled estimation of their assumption constants.

use std::sync::Arc;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AssumptionConstants, ConstraintSystem, EvalMode, FeasibleSet, FiniteSum, LinearConstraints, Matrix,
    NonlinearConstraints, ProblemSpec, SampleSpace, StochasticConstraints, Vector,
};

pub use crate::linalg::delta_of;

/// Safety factor applied to sampled constants.
pub const SAFETY: f64 = 1.25;

/// Names and one-line descriptions of the built-in problems.
pub const BUILTIN_PROBLEMS: &[(&str, &str)] = &[
    ("sharing", "finite-sum nonconvex objective under random full-rank linear constraints Ax = b"),
    ("sphere", "finite-sum nonconvex objective on the unit sphere ‖x‖² = 1 (exact constraint)"),
    ("stoch_sphere", "unit-sphere constraint observed through noisy values and Jacobians"),
];

fn normal_vector(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vector {
    Vector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Region on which constants are estimated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Region {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Points with `inner ≤ ‖x‖ ≤ outer`.
    Annulus { inner: f64, outer: f64 },
}

impl Region {
    pub fn cube(d: usize, half_width: f64) -> Self {
        Self::Box {
            lower: vec![-half_width; d],
            upper: vec![half_width; d],
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        match self {
            Self::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != d || upper.len() != d {
                    return Err(Error::Parameter(format!("estimation box must have dimension {d}")));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u)) {
                    return Err(Error::Parameter("estimation box is empty".into()));
                }
            }
            Self::Annulus { inner, outer } => {
                if !(inner.is_finite() && outer.is_finite() && *inner >= 0.0 && inner < outer) {
                    return Err(Error::Parameter(format!("empty annulus [{inner}, {outer}]")));
                }
            }
        }
        Ok(())
    }

    fn diameter(&self) -> f64 {
        match self {
            Self::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| (u - l) * (u - l))
                .sum::<f64>()
                .sqrt(),
            Self::Annulus { outer, .. } => 2.0 * outer,
        }
    }

    pub fn sample(&self, d: usize, rng: &mut ChaCha8Rng) -> Vector {
        match self {
            Self::Box { lower, upper } => Vector::from_fn(d, |i, _| rng.random_range(lower[i]..=upper[i])),
            Self::Annulus { inner, outer } => {
                let mut dir = normal_vector(rng, d, 1.0);
                while dir.norm() == 0.0 {
                    dir = normal_vector(rng, d, 1.0);
                }
                let r = rng.random_range(*inner..=*outer);
                let n = dir.norm();
                dir * (r / n)
            }
        }
    }

    fn contains(&self, x: &Vector) -> bool {
        match self {
            Self::Box { lower, upper } => x.iter().enumerate().all(|(i, v)| *v >= lower[i] && *v <= upper[i]),
            Self::Annulus { inner, outer } => {
                let r = x.norm();
                r >= *inner && r <= *outer
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateOptions {
    /// Number of random points (and of random pairs) to probe.
    pub points: usize,
    pub seed: u64,
    /// Multiplier on upper-bound constants; lower bounds are divided by it.
    pub safety: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            points: 200,
            seed: 0x5eed,
            safety: SAFETY,
        }
    }
}

/// Objective and constraint data enumerated over all outcomes at one point.
struct Enumerated {
    weights_f: Vec<f64>,
    grads: Vec<Vector>,
    weights_c: Vec<f64>,
    values: Vec<Vector>,
    jacobians: Vec<Matrix>,
}

fn enumerate(problem: &ProblemSpec, x: &Vector) -> Result<Enumerated> {
    let obj = problem.objective();
    let weights_f = obj.sample_space().weights().to_vec();
    let grads = (0..weights_f.len()).map(|i| obj.grad_sample(x, i)).collect();
    let (weights_c, values, jacobians) = match problem.constraints() {
        ConstraintSystem::Unconstrained => (vec![], vec![], vec![]),
        ConstraintSystem::Stochastic(c) => {
            let w = c.sample_space().weights().to_vec();
            let vals = (0..w.len()).map(|z| c.value_sample(x, z)).collect();
            let jacs = (0..w.len()).map(|z| c.jacobian_sample(x, z)).collect();
            (w, vals, jacs)
        }
        other => {
            let (v, j) = other.eval_unchecked(x, EvalMode::Exact)?;
            (vec![1.0], vec![v], vec![j])
        }
    };
    Ok(Enumerated {
        weights_f,
        grads,
        weights_c,
        values,
        jacobians,
    })
}

fn weighted_mean_vec(w: &[f64], xs: &[Vector]) -> Vector {
    let mut out = Vector::zeros(xs[0].len());
    for (wi, x) in w.iter().zip(xs) {
        out.axpy(*wi, x, 1.0);
    }
    out
}

fn weighted_mean_mat(w: &[f64], xs: &[Matrix]) -> Matrix {
    let mut out = Matrix::zeros(xs[0].nrows(), xs[0].ncols());
    for (wi, x) in w.iter().zip(xs) {
        out += x * *wi;
    }
    out
}

fn max_row_norm(j: &Matrix) -> f64 {
    j.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

fn max_abs(v: &Vector) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Estimate the assumption constants of `problem` on `region` by sampling
/// difference quotients (smoothness), enumeration variances, and maxima.
pub fn estimate_constants(problem: &ProblemSpec, region: &Region, opts: EstimateOptions) -> Result<AssumptionConstants> {
    let d = problem.dim();
    region.validate(d)?;
    if opts.points == 0 {
        return Err(Error::Parameter("constant estimation needs at least one point".into()));
    }
    if !(opts.safety.is_finite() && opts.safety >= 1.0) {
        return Err(Error::Parameter("safety factor must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let has_constraints = problem.constraint_count() > 0;
    let mut k = AssumptionConstants {
        q_lower: f64::INFINITY,
        delta_reg: f64::INFINITY,
        ..Default::default()
    };
    let mut f_min = f64::INFINITY;

    for _ in 0..opts.points {
        let x = region.sample(d, &mut rng);
        let e = enumerate(problem, &x)?;
        let g_mean = weighted_mean_vec(&e.weights_f, &e.grads);
        let var_f: f64 = e.weights_f.iter().zip(&e.grads).map(|(w, g)| w * (g - &g_mean).norm_squared()).sum();
        k.v = k.v.max(var_f.sqrt());
        k.c_grad_f = k.c_grad_f.max(g_mean.norm());
        if let Some(f) = problem.objective_value(&x) {
            k.b_f = k.b_f.max(f.abs());
            f_min = f_min.min(f);
        }
        if !has_constraints {
            continue;
        }
        let c_mean = weighted_mean_vec(&e.weights_c, &e.values);
        let j_mean = weighted_mean_mat(&e.weights_c, &e.jacobians);
        let var_c: f64 = e.weights_c.iter().zip(&e.values).map(|(w, c)| w * (c - &c_mean).norm_squared()).sum();
        let var_j: f64 = e
            .weights_c
            .iter()
            .zip(&e.jacobians)
            .map(|(w, j)| w * (j - &j_mean).norm_squared())
            .sum();
        k.sigma_c = k.sigma_c.max(var_c.sqrt());
        k.sigma_grad_c = k.sigma_grad_c.max(var_j.sqrt());
        k.c_c = k.c_c.max(max_abs(&c_mean));
        k.c_grad_c = k.c_grad_c.max(max_row_norm(&j_mean));
        for (c, j) in e.values.iter().zip(&e.jacobians) {
            k.c_tilde_c = k.c_tilde_c.max(max_abs(c));
            k.c_tilde_grad_c = k.c_tilde_grad_c.max(max_row_norm(j));
        }
        // regularity is measured at the projection onto X
        let xp = problem.set().project(&x)?;
        let (c, j) = problem.constraints_eval(&xp, EvalMode::Exact)?;
        let cn = c.norm();
        if cn > 1e-12 {
            let dist = problem.set().normal_cone_distance(&xp, &(j.transpose() * &c))?;
            k.delta_reg = k.delta_reg.min(dist / cn);
        }
    }
    k.sigma_f = k.v;

    let near = 1e-4 * region.diameter();
    for i in 0..2 * opts.points {
        let u = region.sample(d, &mut rng);
        let v = if i % 2 == 0 {
            region.sample(d, &mut rng)
        } else {
            let step = normal_vector(&mut rng, d, 1.0);
            let len = step.norm().max(f64::MIN_POSITIVE);
            let cand = &u + step * (near / len);
            if region.contains(&cand) {
                cand
            } else {
                continue;
            }
        };
        let gap2 = (&u - &v).norm_squared();
        if gap2 == 0.0 {
            continue;
        }
        let eu = enumerate(problem, &u)?;
        let ev = enumerate(problem, &v)?;
        let df: f64 = eu
            .weights_f
            .iter()
            .zip(eu.grads.iter().zip(&ev.grads))
            .map(|(w, (a, b))| w * (a - b).norm_squared())
            .sum();
        k.l_f = k.l_f.max((df / gap2).sqrt());
        if has_constraints {
            let dc: f64 = eu
                .weights_c
                .iter()
                .zip(eu.values.iter().zip(&ev.values))
                .map(|(w, (a, b))| w * (a - b).norm_squared())
                .sum();
            let dj: f64 = eu
                .weights_c
                .iter()
                .zip(eu.jacobians.iter().zip(&ev.jacobians))
                .map(|(w, (a, b))| w * (a - b).norm_squared())
                .sum();
            k.l_tilde_c = k.l_tilde_c.max((dc / gap2).sqrt());
            k.l_tilde_grad_c = k.l_tilde_grad_c.max((dj / gap2).sqrt());
        }
    }
    k.l_tilde_grad_f = k.l_f;

    let s = opts.safety;
    for field in [
        &mut k.l_f,
        &mut k.v,
        &mut k.l_tilde_grad_f,
        &mut k.l_tilde_grad_c,
        &mut k.l_tilde_c,
        &mut k.sigma_f,
        &mut k.sigma_grad_c,
        &mut k.sigma_c,
        &mut k.c_grad_c,
        &mut k.c_c,
        &mut k.c_tilde_grad_c,
        &mut k.c_tilde_c,
        &mut k.b_f,
        &mut k.c_grad_f,
    ] {
        *field *= s;
    }
    k.q_lower = if f_min.is_finite() { f_min - (s - 1.0) * f_min.abs() } else { 0.0 };
    k.delta_reg = if k.delta_reg.is_finite() { k.delta_reg / s } else { 0.0 };
    Ok(k)
}

/// Parameters of the random sharing-type instance `min f(x)` s.t. `Ax = b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SharingParams {
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub curvature: f64,
    pub nonconvexity: f64,
    pub anchor_scale: f64,
    /// Half-width of the cube on which constants are estimated.
    pub region_half_width: f64,
    /// Fixed constants; skips estimation when present.
    pub constants: Option<AssumptionConstants>,
}

impl Default for SharingParams {
    fn default() -> Self {
        Self {
            d: 20,
            m: 5,
            n: 50,
            seed: 7,
            curvature: 1.0,
            nonconvexity: 3.0,
            anchor_scale: 1.0,
            region_half_width: 5.0,
            constants: None,
        }
    }
}

pub fn make_sharing(d: usize, m: usize, n: usize, seed: u64) -> Result<ProblemSpec> {
    make_sharing_with(&SharingParams {
        d,
        m,
        n,
        seed,
        ..SharingParams::default()
    })
}

pub fn make_sharing_with(p: &SharingParams) -> Result<ProblemSpec> {
    if !(p.m >= 1 && p.m <= p.d) {
        return Err(Error::Parameter(format!("sharing problem needs 1 ≤ m ≤ d, got m={} d={}", p.m, p.d)));
    }
    if p.n == 0 {
        return Err(Error::Parameter("sharing problem needs at least one component".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut a = None;
    for _ in 0..10 {
        let cand = Matrix::from_fn(p.m, p.d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let ev = SymmetricEigen::new(&cand * cand.transpose()).eigenvalues;
        let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), e| (lo.min(*e), hi.max(*e)));
        if hi > 0.0 && lo > 1e-8 * hi {
            a = Some(cand);
            break;
        }
    }
    let a = a.ok_or_else(|| Error::Generation("constraint matrix rank deficient after 10 draws".into()))?;
    let x_feas = Vector::from_fn(p.d, |_, _| rng.random_range(-1.0..=1.0));
    let b = &a * &x_feas;
    let anchors = (0..p.n).map(|_| normal_vector(&mut rng, p.d, p.anchor_scale)).collect();
    let objective = FiniteSum::uniform(anchors, p.curvature, p.nonconvexity)?;
    let region = Region::cube(p.d, p.region_half_width);
    match &p.constants {
        Some(k) => ProblemSpec::new(
            "sharing",
            Arc::new(objective),
            ConstraintSystem::Linear(LinearConstraints::new(a, b)?),
            FeasibleSet::FullSpace,
            k.clone(),
        ),
        None => sharing_from_parts(a, b, objective, &region, p.seed),
    }
}

/// Sharing problem from explicit data; constants estimated on `region`.
pub fn sharing_from_parts(a: Matrix, b: Vector, objective: FiniteSum, region: &Region, seed: u64) -> Result<ProblemSpec> {
    let lin = LinearConstraints::new(a, b)?;
    let problem = ProblemSpec::new(
        "sharing",
        Arc::new(objective),
        ConstraintSystem::Linear(lin),
        FeasibleSet::FullSpace,
        AssumptionConstants::default(),
    )?;
    let constants = estimate_constants(
        &problem,
        region,
        EstimateOptions {
            seed,
            ..EstimateOptions::default()
        },
    )?;
    problem.with_constants(constants)
}

/// `c(x) = ‖x‖² − 1`.
#[derive(Clone, Debug)]
pub struct SphereConstraint {
    dim: usize,
}

impl SphereConstraint {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl NonlinearConstraints for SphereConstraint {
    fn dim(&self) -> usize {
        self.dim
    }
    fn count(&self) -> usize {
        1
    }
    fn value(&self, x: &Vector) -> Vector {
        Vector::from_element(1, x.norm_squared() - 1.0)
    }
    fn jacobian(&self, x: &Vector) -> Matrix {
        Matrix::from_row_slice(1, x.len(), (x * 2.0).as_slice())
    }
}

/// Sphere constraint seen through `c̃ = ‖x‖² − 1 + ε` and `∇̃c = 2x(1 + δ)`;
/// outcomes are all pairs `(ε, δ)` of the two zero-mean tables, equally likely.
#[derive(Clone, Debug)]
pub struct NoisySphereConstraint {
    dim: usize,
    value_noise: Vec<f64>,
    jacobian_noise: Vec<f64>,
    space: SampleSpace,
}

impl NoisySphereConstraint {
    pub fn new(dim: usize, value_noise: Vec<f64>, jacobian_noise: Vec<f64>) -> Result<Self> {
        for (name, table) in [("value", &value_noise), ("jacobian", &jacobian_noise)] {
            if table.len() < 2 {
                return Err(Error::Generation(format!("{name} noise table needs at least two outcomes")));
            }
            if table.iter().any(|e| !e.is_finite()) {
                return Err(Error::Generation(format!("{name} noise table has non-finite entries")));
            }
            let mean = table.iter().sum::<f64>() / table.len() as f64;
            if mean.abs() > 1e-12 {
                return Err(Error::Generation(format!("{name} noise table has mean {mean}, expected 0")));
            }
        }
        let space = SampleSpace::uniform(value_noise.len() * jacobian_noise.len())?;
        Ok(Self {
            dim,
            value_noise,
            jacobian_noise,
            space,
        })
    }

    fn split(&self, outcome: usize) -> (f64, f64) {
        let nj = self.jacobian_noise.len();
        (self.value_noise[outcome / nj], self.jacobian_noise[outcome % nj])
    }
}

impl StochasticConstraints for NoisySphereConstraint {
    fn dim(&self) -> usize {
        self.dim
    }
    fn count(&self) -> usize {
        1
    }
    fn sample_space(&self) -> &SampleSpace {
        &self.space
    }
    fn value_sample(&self, x: &Vector, outcome: usize) -> Vector {
        let (eps, _) = self.split(outcome);
        Vector::from_element(1, x.norm_squared() - 1.0 + eps)
    }
    fn jacobian_sample(&self, x: &Vector, outcome: usize) -> Matrix {
        let (_, del) = self.split(outcome);
        Matrix::from_row_slice(1, x.len(), (x * (2.0 * (1.0 + del))).as_slice())
    }
}

/// `count` evenly spaced values spanning `[−scale, scale]`; zero mean by symmetry.
pub fn symmetric_noise(scale: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![0.0; count.max(1)];
    }
    let last = (count - 1) as f64;
    (0..count).map(|i| scale * (2.0 * i as f64 / last - 1.0)).collect()
}

fn random_direction(rng: &mut ChaCha8Rng, d: usize) -> Vector {
    loop {
        let v = normal_vector(rng, d, 1.0);
        let n = v.norm();
        if n > 0.0 {
            return v / n;
        }
    }
}

/// Parameters shared by the sphere-constrained instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SphereParams {
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub curvature: f64,
    pub nonconvexity: f64,
    pub anchor_scale: f64,
    /// Distance from the origin of the point the anchors scatter around (random direction).
    pub anchor_offset: f64,
    /// Norm of the seeded starting point.
    pub initial_radius: f64,
    /// When set, the start is moved from the seeded point to an approximate
    /// minimizer of the exact penalty `f + (ρ/2)‖c‖²` at this `ρ`.
    pub warm_start_rho: Option<f64>,
    pub set: FeasibleSet,
    /// Annulus `[inner, outer]` on which constants are estimated.
    pub region_inner: f64,
    pub region_outer: f64,
    /// Zero-mean additive noise on constraint values (stochastic variant only).
    pub value_noise: Vec<f64>,
    /// Zero-mean relative noise on constraint Jacobians (stochastic variant only).
    pub jacobian_noise: Vec<f64>,
    /// Fixed constants; skips estimation when present.
    pub constants: Option<AssumptionConstants>,
}

impl Default for SphereParams {
    fn default() -> Self {
        Self {
            d: 10,
            n: 20,
            seed: 11,
            curvature: 10.0,
            nonconvexity: 0.5,
            anchor_scale: 0.5,
            anchor_offset: 4.0,
            initial_radius: 1.0,
            warm_start_rho: Some(crate::schedules::MIN_RHO_BASE),
            set: FeasibleSet::FullSpace,
            region_inner: 0.5,
            region_outer: 1.5,
            value_noise: symmetric_noise(0.5, 5),
            jacobian_noise: symmetric_noise(0.2, 5),
            constants: None,
        }
    }
}

pub fn make_sphere(d: usize, seed: u64) -> Result<ProblemSpec> {
    make_sphere_with(&SphereParams {
        d,
        seed,
        ..SphereParams::default()
    })
}

pub fn make_stoch_sphere(d: usize, value_noise: Vec<f64>, jacobian_noise: Vec<f64>, seed: u64) -> Result<ProblemSpec> {
    make_stoch_sphere_with(&SphereParams {
        d,
        seed,
        value_noise,
        jacobian_noise,
        ..SphereParams::default()
    })
}

pub fn make_sphere_with(p: &SphereParams) -> Result<ProblemSpec> {
    let c = SphereConstraint::new(p.d);
    sphere_problem("sphere", p, ConstraintSystem::Deterministic(Arc::new(c)))
}

pub fn make_stoch_sphere_with(p: &SphereParams) -> Result<ProblemSpec> {
    let c = NoisySphereConstraint::new(p.d, p.value_noise.clone(), p.jacobian_noise.clone())?;
    sphere_problem("stoch_sphere", p, ConstraintSystem::Stochastic(Arc::new(c)))
}

fn sphere_problem(name: &str, p: &SphereParams, constraints: ConstraintSystem) -> Result<ProblemSpec> {
    if p.d == 0 || p.n == 0 {
        return Err(Error::Parameter("sphere problem needs d ≥ 1 and n ≥ 1".into()));
    }
    if !(p.region_inner > 0.0 && p.initial_radius >= p.region_inner && p.initial_radius <= p.region_outer) {
        return Err(Error::Parameter("initial radius must lie inside the positive run annulus".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut anchors: Vec<Vector> = (0..p.n).map(|_| normal_vector(&mut rng, p.d, p.anchor_scale)).collect();
    let x0 = random_direction(&mut rng, p.d) * p.initial_radius;
    if p.anchor_offset != 0.0 {
        let center = random_direction(&mut rng, p.d) * p.anchor_offset;
        for a in &mut anchors {
            *a += &center;
        }
    }
    let objective = FiniteSum::uniform(anchors, p.curvature, p.nonconvexity)?;
    let problem = ProblemSpec::new(
        name,
        Arc::new(objective),
        constraints,
        p.set.clone(),
        AssumptionConstants::default(),
    )?;
    let region = Region::Annulus {
        inner: p.region_inner,
        outer: p.region_outer,
    };
    let constants = match &p.constants {
        Some(k) => k.clone(),
        None => estimate_constants(
            &problem,
            &region,
            EstimateOptions {
                seed: p.seed,
                ..EstimateOptions::default()
            },
        )?,
    };
    let problem = problem.with_constants(constants)?;
    let x0 = match p.warm_start_rho {
        Some(rho) => penalty_warm_start(&problem, &x0, rho, WARM_START_ITERS)?,
        None => x0,
    };
    problem.with_initial_point(x0)
}

const WARM_START_ITERS: usize = 20_000;

/// Projected gradient descent on the exact penalty `f + (ρ/2)‖c‖²` from `x0`,
/// with the step `1/L` taken from the problem's smoothness constants. Stops
/// after `iters` steps or once the projected step is below `1e-12`.
pub fn penalty_warm_start(problem: &ProblemSpec, x0: &Vector, rho: f64, iters: usize) -> Result<Vector> {
    let k = problem.constants();
    let m = problem.constraint_count() as f64;
    let smooth = k.l_f + rho * m * (k.c_tilde_grad_c.powi(2) + k.c_c * k.l_tilde_grad_c);
    if !(smooth.is_finite() && smooth > 0.0) {
        return Err(Error::Config("warm start needs positive smoothness constants".into()));
    }
    let empty = Vector::zeros(0);
    let mut x = problem.set().project(x0)?;
    for _ in 0..iters {
        let g = crate::estimator::penalty_grad_exact(problem, &x, &empty, rho)?;
        let next = problem.set().project(&(&x - g / smooth))?;
        let moved = (&next - &x).norm();
        x = next;
        if moved < 1e-12 {
            break;
        }
    }
    Ok(x)
}
