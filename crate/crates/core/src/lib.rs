//! Variance-reduced (STORM) stochastic solvers for nonconvex problems with
//! linear, deterministic nonlinear or expectation constraints.
//!
//! The crate is organised around a [`ProblemSpec`] (objective + constraints +
//! feasible set + assumption constants), step-size [`schedules`], the
//! [`solvers`] themselves, exact-oracle [`metrics`], a few built-in
//! [`problems`] and an experiment [`harness`].

pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod problems;
pub mod schedules;
pub mod solvers;

pub use error::{Error, Result};
pub use estimator::{penalty_grad_exact, penalty_grad_sample, penalty_value_exact, storm_update, EstimatorState, SampleBundle};
pub use harness::{fit_rate, run_experiment, ExperimentConfig, FitSeries, RateFit};
pub use metrics::{stationarity, tracking_error, Multiplier, StationarityReading, TrackingTarget};
pub use model::{
    AssumptionConstants, ConstraintSystem, FeasibleSet, FiniteSum, LinearConstraints, Matrix, NonlinearConstraints,
    Objective, ProblemSpec, SampleSpace, StochasticConstraints, Vector,
};
pub use schedules::{AlmSchedule, AlmTuning, DualSchedule, PenaltyRegime, PenaltySchedule, SmoothnessRegime};
pub use solvers::{run, RunConfig, RunReport, Schedule, SolverKind, TraceRow};
