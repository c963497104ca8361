//! Problem description: sampled oracles, constraint systems, feasible sets and
//! the assumption constants the schedules are built from.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Points this far outside the feasible set are snapped back by projection.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Relative tolerance for deciding that a bound is active.
pub const ACTIVE_TOL: f64 = 1e-10;

/// Finite outcome set with explicit probabilities.
#[derive(Clone, Debug)]
pub struct SampleSpace {
    weights: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl SampleSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Parameter("sample space must have at least one outcome".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Parameter("sample weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("sample weights sum to {total}, expected 1")));
        }
        let index = WeightedIndex::new(&weights)
            .map_err(|e| Error::Parameter(format!("sample weights: {e}")))?;
        Ok(Self { weights, index })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("sample space must have at least one outcome".into()));
        }
        Self::new(vec![1.0 / n as f64; n])
    }

    /// The one-outcome space of a deterministic oracle.
    pub fn singleton() -> Self {
        Self::new(vec![1.0]).expect("singleton space")
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn contains(&self, outcome: usize) -> bool {
        outcome < self.weights.len()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.weights.len() == 1 {
            0
        } else {
            self.index.sample(rng)
        }
    }
}

/// Stochastic first-order oracle for the objective over a finite sample space.
pub trait Objective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn sample_space(&self) -> &SampleSpace;
    /// Gradient of the component selected by `outcome`.
    fn grad_sample(&self, x: &Vector, outcome: usize) -> Vector;
    fn value_sample(&self, _x: &Vector, _outcome: usize) -> Option<f64> {
        None
    }

    /// Probability-weighted enumeration of `grad_sample`.
    fn exact_grad(&self, x: &Vector) -> Vector {
        let mut g = Vector::zeros(self.dim());
        for (i, w) in self.sample_space().weights().iter().enumerate() {
            if *w != 0.0 {
                g.axpy(*w, &self.grad_sample(x, i), 1.0);
            }
        }
        g
    }

    fn value(&self, x: &Vector) -> Option<f64> {
        let mut total = 0.0;
        for (i, w) in self.sample_space().weights().iter().enumerate() {
            total += w * self.value_sample(x, i)?;
        }
        Some(total)
    }
}

/// Bounded smooth nonconvex bump `t²/(1+t²)` and its first two derivatives.
pub fn bump(t: f64) -> f64 {
    let t2 = t * t;
    t2 / (1.0 + t2)
}

pub fn bump_prime(t: f64) -> f64 {
    let s = 1.0 + t * t;
    2.0 * t / (s * s)
}

/// Weighted finite sum of `(q/2)‖x − aᵢ‖² + s·Σⱼ bump(xⱼ)`.
///
/// With `s > 0` the sum is nonconvex whenever `s > q/2`, since the bump's
/// curvature reaches `−s/2`.
#[derive(Clone, Debug)]
pub struct FiniteSum {
    anchors: Vec<Vector>,
    space: SampleSpace,
    curvature: f64,
    nonconvexity: f64,
}

impl FiniteSum {
    pub fn new(anchors: Vec<Vector>, space: SampleSpace, curvature: f64, nonconvexity: f64) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::Parameter("finite sum needs at least one component".into()));
        }
        check_dim("finite-sum weights", anchors.len(), space.len())?;
        let d = anchors[0].len();
        for a in &anchors {
            check_dim("finite-sum anchor", d, a.len())?;
        }
        if !(curvature >= 0.0 && nonconvexity >= 0.0) {
            return Err(Error::Parameter("curvature and nonconvexity must be nonnegative".into()));
        }
        Ok(Self {
            anchors,
            space,
            curvature,
            nonconvexity,
        })
    }

    pub fn uniform(anchors: Vec<Vector>, curvature: f64, nonconvexity: f64) -> Result<Self> {
        let space = SampleSpace::uniform(anchors.len())?;
        Self::new(anchors, space, curvature, nonconvexity)
    }

    pub fn anchors(&self) -> &[Vector] {
        &self.anchors
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn nonconvexity(&self) -> f64 {
        self.nonconvexity
    }
}

impl Objective for FiniteSum {
    fn dim(&self) -> usize {
        self.anchors[0].len()
    }

    fn sample_space(&self) -> &SampleSpace {
        &self.space
    }

    fn grad_sample(&self, x: &Vector, outcome: usize) -> Vector {
        let a = &self.anchors[outcome];
        let (q, s) = (self.curvature, self.nonconvexity);
        Vector::from_fn(x.len(), |j, _| q * (x[j] - a[j]) + s * bump_prime(x[j]))
    }

    fn value_sample(&self, x: &Vector, outcome: usize) -> Option<f64> {
        let a = &self.anchors[outcome];
        let quad = 0.5 * self.curvature * (x - a).norm_squared();
        let bumps: f64 = x.iter().map(|&t| bump(t)).sum();
        Some(quad + self.nonconvexity * bumps)
    }
}

/// Exact nonlinear constraints `c(x) = 0`.
pub trait NonlinearConstraints: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn count(&self) -> usize;
    fn value(&self, x: &Vector) -> Vector;
    fn jacobian(&self, x: &Vector) -> Matrix;
}

/// Constraints known only through unbiased samples of values and Jacobians.
pub trait StochasticConstraints: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn count(&self) -> usize;
    fn sample_space(&self) -> &SampleSpace;
    fn value_sample(&self, x: &Vector, outcome: usize) -> Vector;
    fn jacobian_sample(&self, x: &Vector, outcome: usize) -> Matrix;

    fn exact_value(&self, x: &Vector) -> Vector {
        let mut c = Vector::zeros(self.count());
        for (i, w) in self.sample_space().weights().iter().enumerate() {
            if *w != 0.0 {
                c.axpy(*w, &self.value_sample(x, i), 1.0);
            }
        }
        c
    }

    fn exact_jacobian(&self, x: &Vector) -> Matrix {
        let mut j = Matrix::zeros(self.count(), self.dim());
        for (i, w) in self.sample_space().weights().iter().enumerate() {
            if *w != 0.0 {
                j += self.jacobian_sample(x, i) * *w;
            }
        }
        j
    }
}

/// `Ax = b` together with the spectral data the linear-constraint schedule needs.
#[derive(Clone, Debug)]
pub struct LinearConstraints {
    a: Matrix,
    b: Vector,
    delta: f64,
    norm: f64,
}

impl LinearConstraints {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        check_dim("linear constraint rhs", a.nrows(), b.len())?;
        let delta = linalg::delta_of(&a)?;
        let norm = linalg::spectral_norm(&a);
        Ok(Self { a, b, delta, norm })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    /// Smallest nonzero eigenvalue of `AᵀA`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Spectral norm of `A`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn residual(&self, x: &Vector) -> Vector {
        &self.a * x - &self.b
    }
}

#[derive(Clone, Debug)]
pub enum ConstraintSystem {
    /// No equality constraints (`m = 0`).
    Unconstrained,
    Linear(LinearConstraints),
    Deterministic(Arc<dyn NonlinearConstraints>),
    Stochastic(Arc<dyn StochasticConstraints>),
}

/// How constraint data is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    Exact,
    Sampled(usize),
}

impl ConstraintSystem {
    pub fn count(&self) -> usize {
        match self {
            Self::Unconstrained => 0,
            Self::Linear(l) => l.a.nrows(),
            Self::Deterministic(c) => c.count(),
            Self::Stochastic(c) => c.count(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Unconstrained => "unconstrained",
            Self::Linear(_) => "linear",
            Self::Deterministic(_) => "deterministic",
            Self::Stochastic(_) => "stochastic",
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Self::Unconstrained => None,
            Self::Linear(l) => Some(l.a.ncols()),
            Self::Deterministic(c) => Some(c.dim()),
            Self::Stochastic(c) => Some(c.dim()),
        }
    }

    /// Value and Jacobian; `x` must already have the right dimension.
    pub(crate) fn eval_unchecked(&self, x: &Vector, mode: EvalMode) -> Result<(Vector, Matrix)> {
        match (self, mode) {
            (Self::Unconstrained, EvalMode::Exact) => Ok((Vector::zeros(0), Matrix::zeros(0, x.len()))),
            (Self::Linear(l), EvalMode::Exact) => Ok((l.residual(x), l.a.clone())),
            (Self::Deterministic(c), EvalMode::Exact) => Ok((c.value(x), c.jacobian(x))),
            (Self::Stochastic(c), EvalMode::Exact) => Ok((c.exact_value(x), c.exact_jacobian(x))),
            (Self::Stochastic(c), EvalMode::Sampled(z)) => {
                if !c.sample_space().contains(z) {
                    return Err(Error::Precondition(format!("unknown constraint outcome {z}")));
                }
                Ok((c.value_sample(x, z), c.jacobian_sample(x, z)))
            }
            (other, EvalMode::Sampled(_)) => Err(Error::Variant(format!(
                "sampled evaluation requires stochastic constraints, found {}",
                other.kind()
            ))),
        }
    }

    /// Exact constraint values only (no Jacobian).
    pub(crate) fn exact_value(&self, x: &Vector) -> Vector {
        match self {
            Self::Unconstrained => Vector::zeros(0),
            Self::Linear(l) => l.residual(x),
            Self::Deterministic(c) => c.value(x),
            Self::Stochastic(c) => c.exact_value(x),
        }
    }
}

/// Closed convex set with an exact projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeasibleSet {
    FullSpace,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    NonnegativeOrthant,
    Ball { center: Vec<f64>, radius: f64 },
}

impl FeasibleSet {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let set = Self::Box { lower, upper };
        set.validate()?;
        Ok(set)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let set = Self::Ball { center, radius };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Box { lower, upper } => {
                check_dim("box bounds", lower.len(), upper.len())?;
                for (l, u) in lower.iter().zip(upper) {
                    if !(l.is_finite() && u.is_finite() && l <= u) {
                        return Err(Error::Parameter(format!("invalid box bounds [{l}, {u}]")));
                    }
                }
                Ok(())
            }
            Self::Ball { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Parameter("ball needs finite center and positive radius".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Dimension fixed by the set's data, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Box { lower, .. } => Some(lower.len()),
            Self::Ball { center, .. } => Some(center.len()),
            _ => None,
        }
    }

    fn check(&self, x: &Vector) -> Result<()> {
        if let Some(d) = self.dim() {
            check_dim("feasible set", d, x.len())?;
        }
        Ok(())
    }

    /// Euclidean projection.
    pub fn project(&self, x: &Vector) -> Result<Vector> {
        self.check(x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("cannot project a non-finite point".into()));
        }
        Ok(self.project_unchecked(x))
    }

    pub(crate) fn project_unchecked(&self, x: &Vector) -> Vector {
        match self {
            Self::FullSpace => x.clone(),
            Self::Box { lower, upper } => Vector::from_fn(x.len(), |i, _| x[i].clamp(lower[i], upper[i])),
            Self::NonnegativeOrthant => x.map(|v| v.max(0.0)),
            Self::Ball { center, radius } => {
                let c = Vector::from_column_slice(center);
                let off = x - &c;
                let dist = off.norm();
                // a few ulps of slack keeps the projection exactly idempotent
                if dist <= radius * (1.0 + 4.0 * f64::EPSILON) {
                    x.clone()
                } else {
                    c + off * (radius / dist)
                }
            }
        }
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        if self.check(x).is_err() {
            return false;
        }
        match self {
            Self::FullSpace => true,
            Self::Box { lower, upper } => x
                .iter()
                .enumerate()
                .all(|(i, v)| *v >= lower[i] - tol && *v <= upper[i] + tol),
            Self::NonnegativeOrthant => x.iter().all(|v| *v >= -tol),
            Self::Ball { center, radius } => {
                (x - Vector::from_column_slice(center)).norm() <= radius + tol
            }
        }
    }

    /// Distance from `v` to `−N_X(x)`; zero exactly when `v` certifies stationarity.
    pub fn normal_cone_distance(&self, x: &Vector, v: &Vector) -> Result<f64> {
        self.check(x)?;
        check_dim("cone direction", x.len(), v.len())?;
        if !self.contains(x, MEMBERSHIP_TOL) {
            return Err(Error::Precondition("point lies outside the feasible set".into()));
        }
        let x = self.project_unchecked(x);
        let active = |xi: f64, bound: f64| (xi - bound).abs() <= ACTIVE_TOL * (1.0 + bound.abs());
        let dist = match self {
            Self::FullSpace => v.norm(),
            Self::Box { lower, upper } => (0..x.len())
                .map(|i| {
                    let lo = active(x[i], lower[i]);
                    let hi = active(x[i], upper[i]);
                    match (lo, hi) {
                        (true, true) => 0.0,
                        (true, false) => v[i].min(0.0).powi(2),
                        (false, true) => v[i].max(0.0).powi(2),
                        (false, false) => v[i] * v[i],
                    }
                })
                .sum::<f64>()
                .sqrt(),
            Self::NonnegativeOrthant => (0..x.len())
                .map(|i| if active(x[i], 0.0) { v[i].min(0.0).powi(2) } else { v[i] * v[i] })
                .sum::<f64>()
                .sqrt(),
            Self::Ball { center, radius } => {
                let off = &x - Vector::from_column_slice(center);
                let r = off.norm();
                if r < radius - ACTIVE_TOL * (1.0 + radius) {
                    v.norm()
                } else {
                    let u = off / r;
                    let normal = v.dot(&u);
                    let tangential = (v - &u * normal).norm_squared();
                    (tangential + normal.max(0.0).powi(2)).sqrt()
                }
            }
        };
        Ok(dist)
    }
}

/// Constants of the smoothness, variance, boundedness and regularity assumptions.
/// Tilde constants are the mean-square versions over the sample space.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssumptionConstants {
    /// Mean-square smoothness of the objective oracle.
    pub l_f: f64,
    /// Bound on the objective oracle's standard deviation.
    pub v: f64,
    pub l_tilde_grad_f: f64,
    pub l_tilde_grad_c: f64,
    pub l_tilde_c: f64,
    pub sigma_f: f64,
    pub sigma_grad_c: f64,
    pub sigma_c: f64,
    pub c_grad_c: f64,
    pub c_c: f64,
    pub c_tilde_grad_c: f64,
    pub c_tilde_c: f64,
    pub b_f: f64,
    pub c_grad_f: f64,
    pub q_lower: f64,
    /// Regularity: `d(∇c(x)ᵀc(x), −N_X(x)) ≥ delta_reg·‖c(x)‖` on the run region.
    pub delta_reg: f64,
}

impl AssumptionConstants {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("l_f", self.l_f),
            ("v", self.v),
            ("l_tilde_grad_f", self.l_tilde_grad_f),
            ("l_tilde_grad_c", self.l_tilde_grad_c),
            ("l_tilde_c", self.l_tilde_c),
            ("sigma_f", self.sigma_f),
            ("sigma_grad_c", self.sigma_grad_c),
            ("sigma_c", self.sigma_c),
            ("c_grad_c", self.c_grad_c),
            ("c_c", self.c_c),
            ("c_tilde_grad_c", self.c_tilde_grad_c),
            ("c_tilde_c", self.c_tilde_c),
            ("b_f", self.b_f),
            ("c_grad_f", self.c_grad_f),
            ("delta_reg", self.delta_reg),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("constant {name} = {v} must be finite and nonnegative")));
            }
        }
        if !self.q_lower.is_finite() {
            return Err(Error::Config("constant q_lower must be finite".into()));
        }
        Ok(())
    }
}

/// A constrained stochastic problem `min E f(x, ξ)` s.t. `c(x) = 0`, `x ∈ X`.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    name: String,
    dim: usize,
    objective: Arc<dyn Objective>,
    constraints: ConstraintSystem,
    set: FeasibleSet,
    constants: AssumptionConstants,
    initial_point: Option<Vector>,
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        objective: Arc<dyn Objective>,
        constraints: ConstraintSystem,
        set: FeasibleSet,
        constants: AssumptionConstants,
    ) -> Result<Self> {
        let dim = objective.dim();
        if dim == 0 {
            return Err(Error::Parameter("problem dimension must be positive".into()));
        }
        if let Some(d) = constraints.dim() {
            check_dim("constraint system", dim, d)?;
        }
        if let Some(d) = set.dim() {
            check_dim("feasible set", dim, d)?;
        }
        set.validate()?;
        constants.validate()?;
        Ok(Self {
            name: name.into(),
            dim,
            objective,
            constraints,
            set,
            constants,
            initial_point: None,
        })
    }

    /// Starting point for the solvers; snapped into `X` if it is within tolerance.
    pub fn with_initial_point(mut self, x0: Vector) -> Result<Self> {
        check_dim("initial point", self.dim, x0.len())?;
        if !self.set.contains(&x0, MEMBERSHIP_TOL) {
            return Err(Error::Precondition("initial point lies outside the feasible set".into()));
        }
        self.initial_point = Some(self.set.project(&x0)?);
        Ok(self)
    }

    pub fn with_constants(mut self, constants: AssumptionConstants) -> Result<Self> {
        constants.validate()?;
        self.constants = constants;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn objective(&self) -> &Arc<dyn Objective> {
        &self.objective
    }

    pub fn constraints(&self) -> &ConstraintSystem {
        &self.constraints
    }

    pub fn set(&self) -> &FeasibleSet {
        &self.set
    }

    pub fn constants(&self) -> &AssumptionConstants {
        &self.constants
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.count()
    }

    /// Configured starting point, or the projection of the origin onto `X`.
    pub fn initial_point(&self) -> Vector {
        self.initial_point
            .clone()
            .unwrap_or_else(|| self.set.project_unchecked(&Vector::zeros(self.dim)))
    }

    fn check_point(&self, x: &Vector) -> Result<()> {
        check_dim("point", self.dim, x.len())
    }

    pub fn sample_grad_f(&self, x: &Vector, outcome: usize) -> Result<Vector> {
        self.check_point(x)?;
        if !self.objective.sample_space().contains(outcome) {
            return Err(Error::Precondition(format!("unknown objective outcome {outcome}")));
        }
        Ok(self.objective.grad_sample(x, outcome))
    }

    pub fn exact_grad_f(&self, x: &Vector) -> Result<Vector> {
        self.check_point(x)?;
        Ok(self.objective.exact_grad(x))
    }

    pub fn objective_value(&self, x: &Vector) -> Option<f64> {
        if x.len() != self.dim {
            return None;
        }
        self.objective.value(x)
    }

    pub fn constraints_eval(&self, x: &Vector, mode: EvalMode) -> Result<(Vector, Matrix)> {
        self.check_point(x)?;
        self.constraints.eval_unchecked(x, mode)
    }

    /// Exact constraint values `c(x)` (empty when unconstrained).
    pub fn constraint_value(&self, x: &Vector) -> Result<Vector> {
        self.check_point(x)?;
        Ok(self.constraints.exact_value(x))
    }
}
