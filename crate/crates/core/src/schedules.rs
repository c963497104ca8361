//! Per-iteration step sizes, penalty parameters and momentum weights.
//!
//! Logarithms are natural logs throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AssumptionConstants;

/// Smallest penalty base accepted by the increasing-penalty schedules.
pub const MIN_RHO_BASE: f64 = 1.0 + 1e-6;
/// Constraint samples at or below this magnitude produce no dual increment.
pub const DUAL_SKIP_TOL: f64 = 1e-14;

/// Free positive constants of the linear-constraint schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlmTuning {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl Default for AlmTuning {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            c4: 1.0,
        }
    }
}

/// Parameters of one augmented-Lagrangian step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlmStep {
    pub eta: f64,
    pub alpha: f64,
    pub rho: f64,
}

/// Step sizes `η_k = η/((k+k₀)^{1/3} ln(k+k₀))`, momentum `α_k = min(1, cη_k²)`
/// and a constant penalty, for the linear-constraint augmented Lagrangian.
#[derive(Clone, Debug, PartialEq)]
pub struct AlmSchedule {
    tuning: AlmTuning,
    l_f: f64,
    delta: f64,
    a_norm: f64,
    c: f64,
    m_const: f64,
    rho: f64,
    eta_base: f64,
    k0: f64,
    k0_terms: [f64; 7],
}

impl AlmSchedule {
    /// `l_f`: smoothness of the objective; `delta`: smallest nonzero eigenvalue
    /// of `AᵀA`; `a_norm`: spectral norm of `A`.
    pub fn new(l_f: f64, delta: f64, a_norm: f64, tuning: AlmTuning) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} = {v} must be finite and positive")))
            }
        };
        positive("l_f", l_f)?;
        positive("delta", delta)?;
        if !(a_norm.is_finite() && a_norm >= 0.0) {
            return Err(Error::Parameter(format!("constraint norm {a_norm} must be nonnegative")));
        }
        for (name, v) in [("c1", tuning.c1), ("c2", tuning.c2), ("c3", tuning.c3), ("c4", tuning.c4)] {
            positive(name, v)?;
        }
        let AlmTuning { c1, c2, c3, c4 } = tuning;
        let l = l_f;
        let c = 121.0 * l * l;
        let m_const = (1.0 / (448.0 * l))
            .min(1.0 / (32.0 * (1.0 + c2 + c3) * l))
            .min(1.0 / (8.0 * (1.0 + 2.0 * c3) * l));
        let rho = (7.0 * (1.0 + c1) / (m_const * delta))
            .max(4.0 * (6.0 + c4) * (1.0 + c1) * l / delta)
            .max(168.0 * (1.0 + c1) * l / delta);
        let eta = 1.0 / (11.0 * (l + rho * a_norm * a_norm));
        let k0_terms = [
            (10.0 * m_const / (3.0 * c1 * eta)).powi(2),
            (20.0 / (3.0 * eta * c2 * l)).powi(2),
            (10.0 / (3.0 * c3 * l)).powi(2),
            400.0 / (3.0 * eta * eta * c4 * l * l),
            (20.0 / (c * eta * eta)).powi(4),
            (50.0 / (3.0 * c * eta * eta)).powi(6),
            2.0,
        ];
        let k0 = k0_terms.iter().copied().fold(f64::MIN, f64::max);
        Ok(Self {
            tuning,
            l_f,
            delta,
            a_norm,
            c,
            m_const,
            rho,
            eta_base: eta,
            k0,
            k0_terms,
        })
    }

    /// Replace the offset `k₀` (diagnostics and experiments only).
    pub fn with_k0(mut self, k0: f64) -> Result<Self> {
        if !(k0.is_finite() && k0 >= 1.0) {
            return Err(Error::Parameter(format!("offset k0 = {k0} must be at least 1")));
        }
        self.k0 = k0;
        Ok(self)
    }

    pub fn tuning(&self) -> AlmTuning {
        self.tuning
    }
    pub fn l_f(&self) -> f64 {
        self.l_f
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn a_norm(&self) -> f64 {
        self.a_norm
    }
    /// Momentum scale `c = 121 L_f²`.
    pub fn c(&self) -> f64 {
        self.c
    }
    /// Step constant (distinct from the constraint count).
    pub fn m_const(&self) -> f64 {
        self.m_const
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn eta_base(&self) -> f64 {
        self.eta_base
    }
    pub fn k0(&self) -> f64 {
        self.k0
    }
    /// The seven candidates whose maximum defines the default `k₀`.
    pub fn k0_terms(&self) -> [f64; 7] {
        self.k0_terms
    }

    fn shifted(&self, k: u64) -> f64 {
        k as f64 + self.k0
    }

    pub fn eta(&self, k: u64) -> f64 {
        let n = self.shifted(k);
        self.eta_base / (n.cbrt() * n.ln())
    }

    pub fn alpha(&self, k: u64) -> f64 {
        let eta = self.eta(k);
        (self.c * eta * eta).min(1.0)
    }

    pub fn at(&self, k: u64) -> AlmStep {
        AlmStep {
            eta: self.eta(k),
            alpha: self.alpha(k),
            rho: self.rho,
        }
    }

    /// `1/η_k`.
    pub fn inv_eta(&self, k: u64) -> f64 {
        let n = self.shifted(k);
        n.cbrt() * n.ln() / self.eta_base
    }

    /// `1/η_{k+1} − 1/η_k` without cancellation, even when `k₀` dwarfs `k`.
    pub fn inv_eta_increment(&self, k: u64) -> f64 {
        let n = self.shifted(k);
        let t = 1.0 / n;
        let lp = t.ln_1p();
        let growth = (lp / 3.0).exp_m1() + (lp / 3.0).exp() * lp / n.ln();
        self.inv_eta(k) * growth
    }

    /// Weight `v_k` of the variance bound in the potential's one-step allowance.
    pub fn allowance_weight(&self, k: u64) -> f64 {
        let c1 = self.tuning.c1;
        let (rho, delta, m, l, c) = (self.rho, self.delta, self.m_const, self.l_f, self.c);
        let a_k = self.alpha(k);
        let a_next = self.alpha(k + 1);
        let eta_k = self.eta(k);
        let eta_next = self.eta(k + 1);
        let a2 = a_k * a_k;
        6.0 * (1.0 + c1) * a2 / (delta * rho)
            + a2 * m / (l * eta_next)
            + 6.0 * a_next * a_next / (c * eta_next)
            + 18.0 * (1.0 + c1) * a2 / (rho * delta)
            + 12.0 * m * a2 / (l * eta_k)
    }
}

/// Which increasing-penalty schedule to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyRegime {
    /// Stochastic constraints: exponents (3/5, 1/5, 4/5).
    Stochastic,
    /// Exact constraints: exponents (1/2, 1/4, 1/2).
    Deterministic,
}

impl PenaltyRegime {
    fn exponents(self) -> (f64, f64, f64) {
        match self {
            Self::Stochastic => (0.6, 0.2, 0.8),
            Self::Deterministic => (0.5, 0.25, 0.5),
        }
    }
}

/// Parameters of one penalty step: `η_k`, `ρ_k`, and the momentum weight
/// `α_{k+1}` used when forming the next estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyStep {
    pub eta: f64,
    pub rho: f64,
    pub alpha_next: f64,
}

/// `η_k = 1/(9L̃ρ(k+1)^a)`, `ρ_k = ρk^b`, `α_{k+1} = 72/(81(k+1)^c)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltySchedule {
    regime: PenaltyRegime,
    rho_base: f64,
    l_tilde: f64,
}

impl PenaltySchedule {
    /// `rho_base` below `1 + 1e-6` is raised to that floor.
    pub fn new(regime: PenaltyRegime, rho_base: f64, l_tilde: f64) -> Result<Self> {
        if !rho_base.is_finite() {
            return Err(Error::Parameter(format!("penalty base {rho_base} must be finite")));
        }
        if !(l_tilde.is_finite() && l_tilde > 0.0) {
            return Err(Error::Parameter(format!("smoothness scale {l_tilde} must be positive")));
        }
        if rho_base < MIN_RHO_BASE {
            log::debug!("penalty base {rho_base} raised to {MIN_RHO_BASE}");
        }
        Ok(Self {
            regime,
            rho_base: rho_base.max(MIN_RHO_BASE),
            l_tilde,
        })
    }

    pub fn stochastic(rho_base: f64, l_tilde: f64) -> Result<Self> {
        Self::new(PenaltyRegime::Stochastic, rho_base, l_tilde)
    }

    pub fn deterministic(rho_base: f64, l_tilde: f64) -> Result<Self> {
        Self::new(PenaltyRegime::Deterministic, rho_base, l_tilde)
    }

    pub fn regime(&self) -> PenaltyRegime {
        self.regime
    }
    pub fn rho_base(&self) -> f64 {
        self.rho_base
    }
    pub fn l_tilde(&self) -> f64 {
        self.l_tilde
    }

    pub fn eta(&self, k: u64) -> f64 {
        let (a, _, _) = self.regime.exponents();
        1.0 / (9.0 * self.l_tilde * self.rho_base * (k as f64 + 1.0).powf(a))
    }

    pub fn rho(&self, k: u64) -> f64 {
        let (_, b, _) = self.regime.exponents();
        self.rho_base * (k as f64).powf(b)
    }

    /// `α_{k+1}`; defined for every `k ≥ 0` (`α₁ = 72/81`).
    pub fn alpha_next(&self, k: u64) -> f64 {
        let (_, _, c) = self.regime.exponents();
        72.0 / (81.0 * (k as f64 + 1.0).powf(c))
    }

    pub fn at(&self, k: u64) -> PenaltyStep {
        PenaltyStep {
            eta: self.eta(k),
            rho: self.rho(k),
            alpha_next: self.alpha_next(k),
        }
    }
}

/// Penalty schedule plus the decaying dual step of the dual-update variant.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSchedule {
    gamma: f64,
    penalty: PenaltySchedule,
    initial_multiplier: Vec<f64>,
}

impl DualSchedule {
    pub fn new(gamma: f64, penalty: PenaltySchedule) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Parameter(format!("dual step scale {gamma} must be positive")));
        }
        Ok(Self {
            gamma,
            penalty,
            initial_multiplier: Vec::new(),
        })
    }

    /// Starting multiplier `λ₁` (zero when never set).
    pub fn with_initial_multiplier(mut self, lambda: Vec<f64>) -> Result<Self> {
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("initial multiplier must be finite".into()));
        }
        self.initial_multiplier = lambda;
        Ok(self)
    }

    pub fn initial_multiplier(&self) -> &[f64] {
        &self.initial_multiplier
    }

    pub fn initial_multiplier_norm(&self) -> f64 {
        self.initial_multiplier.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn penalty(&self) -> &PenaltySchedule {
        &self.penalty
    }

    /// `γ/(k ln²(k+1) |c̃|)`, or 0 when `|c̃| ≤ 1e-14`.
    pub fn dual_gamma(&self, k: u64, c_sample: f64) -> f64 {
        if c_sample.abs() <= DUAL_SKIP_TOL {
            return 0.0;
        }
        self.increment_magnitude(k) / c_sample.abs()
    }

    /// `γ/(k ln²(k+1))`: the size of every nonzero dual increment at step `k`.
    pub fn increment_magnitude(&self, k: u64) -> f64 {
        let kf = k as f64;
        let l = (kf + 1.0).ln();
        self.gamma / (kf * l * l)
    }

    /// The increment `γ_k·c̃` added to one multiplier coordinate.
    pub fn dual_increment(&self, k: u64, c_sample: f64) -> f64 {
        if c_sample.abs() <= DUAL_SKIP_TOL {
            0.0
        } else {
            self.increment_magnitude(k).copysign(c_sample)
        }
    }
}

/// Which mean-square smoothness bound of the penalty oracle to compute.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SmoothnessRegime {
    Stochastic,
    Deterministic,
    /// Dual-update variant; carries `‖λ₁‖`.
    Dual { initial_multiplier_norm: f64 },
}

/// Smoothness scale `L̃` of the sampled penalty gradient per unit penalty.
pub fn l_tilde(constants: &AssumptionConstants, m: usize, regime: SmoothnessRegime) -> Result<f64> {
    if !(constants.l_tilde_grad_f.is_finite() && constants.l_tilde_grad_f > 0.0) {
        return Err(Error::Config(
            "objective mean-square smoothness (l_tilde_grad_f) is required and must be positive".into(),
        ));
    }
    let m2 = (m * m) as f64;
    let k = constants;
    let products = k.c_tilde_c.powi(2) * k.l_tilde_grad_c.powi(2) + k.c_tilde_grad_c.powi(2) * k.l_tilde_c.powi(2);
    let sq = match regime {
        SmoothnessRegime::Stochastic | SmoothnessRegime::Deterministic => {
            4.0 * k.l_tilde_grad_f.powi(2) + 4.0 * m2 * products
        }
        SmoothnessRegime::Dual {
            initial_multiplier_norm,
        } => {
            if !(initial_multiplier_norm.is_finite() && initial_multiplier_norm >= 0.0) {
                return Err(Error::Config("initial multiplier norm must be finite".into()));
            }
            0.75 * k.l_tilde_grad_f.powi(2)
                + 0.75 * m2 * (initial_multiplier_norm + 4.0).powi(2) * k.l_tilde_grad_c.powi(2)
                + 1.5 * m2 * products
        }
    };
    if !sq.is_finite() {
        return Err(Error::Config("smoothness scale is not finite".into()));
    }
    Ok(sq.sqrt())
}

/// One failed inequality of the step-size validation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    /// 1-based index of the inequality (see [`validate_alm_schedule`]).
    pub inequality: usize,
    pub k: u64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleValidation {
    pub points_checked: usize,
    pub passed: [bool; 6],
    pub first_violation: Option<Violation>,
}

impl ScheduleValidation {
    pub fn all_pass(&self) -> bool {
        self.passed.iter().all(|p| *p)
    }
}

/// Indices `1..=k_max`: dense for small `k`, log-spaced afterwards, at most 10⁴ points.
pub fn validation_grid(k_max: u64) -> Vec<u64> {
    const DENSE: u64 = 1000;
    const TOTAL: usize = 10_000;
    let mut ks: Vec<u64> = (1..=k_max.min(DENSE)).collect();
    if k_max > DENSE {
        let remaining = TOTAL - ks.len();
        let (lo, hi) = ((DENSE as f64).ln(), (k_max as f64).ln());
        for i in 1..=remaining {
            let k = (lo + (hi - lo) * i as f64 / remaining as f64).exp().round() as u64;
            let k = k.clamp(DENSE + 1, k_max);
            if ks.last() != Some(&k) {
                ks.push(k);
            }
        }
    }
    ks
}

/// Check the six step-size inequalities the convergence analysis relies on,
/// written with `u_k = 1/η_k` and `D_k = u_{k+1} − u_k`:
///
/// 1. `D_{k+1}/(2ρ) ≤ c₁/(ρ m)`
/// 2. `(u_{k+1}² − u_k²)/2 ≤ c₂ L u_{k+1}`
/// 3. `D_k u_{k+1}/2 ≤ c₃ L u_{k+1}`
/// 4. `3 D_k² ≤ c₄ L²`
/// 5. `D_k ≤ c/(2 u_{k+1})`
/// 6. `u_{k+2} ≤ 2 u_{k+1}`
pub fn validate_alm_schedule(sched: &AlmSchedule, k_max: u64) -> Result<ScheduleValidation> {
    if k_max < 2 {
        return Err(Error::Parameter("validation needs k_max ≥ 2".into()));
    }
    let AlmTuning { c1, c2, c3, c4 } = sched.tuning;
    let (rho, m, l, c) = (sched.rho, sched.m_const, sched.l_f, sched.c);
    let mut passed = [true; 6];
    let mut first: Option<Violation> = None;
    let grid = validation_grid(k_max);
    for &k in &grid {
        let u0 = sched.inv_eta(k);
        let u1 = sched.inv_eta(k + 1);
        let u2 = sched.inv_eta(k + 2);
        let d0 = sched.inv_eta_increment(k);
        let d1 = sched.inv_eta_increment(k + 1);
        let checks = [
            (d1 / (2.0 * rho), c1 / (rho * m)),
            (d0 * (u1 + u0) / 2.0, c2 * l * u1),
            (d0 * u1 / 2.0, c3 * l * u1),
            (3.0 * d0 * d0, c4 * l * l),
            (d0, c / (2.0 * u1)),
            (u2, 2.0 * u1),
        ];
        for (i, (lhs, rhs)) in checks.into_iter().enumerate() {
            if lhs.is_nan() || rhs.is_nan() || lhs > rhs {
                passed[i] = false;
                if first.is_none() {
                    first = Some(Violation {
                        inequality: i + 1,
                        k,
                        lhs,
                        rhs,
                    });
                }
            }
        }
    }
    Ok(ScheduleValidation {
        points_checked: grid.len(),
        passed,
        first_violation: first,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_alm() -> AlmSchedule {
        AlmSchedule::new(1.0, 1.0, 1.0, AlmTuning::default()).unwrap()
    }

    #[test]
    fn alm_default_constants() {
        let s = default_alm();
        assert_eq!(s.c(), 121.0);
        assert!((s.m_const() - 1.0 / 448.0).abs() < 1e-18);
        assert!((s.rho() - 6272.0).abs() < 1e-9);
        assert!((s.eta_base() - 1.0 / (11.0 * 6273.0)).abs() < 1e-18);
    }

    #[test]
    fn alm_rejects_nonpositive_inputs() {
        assert!(AlmSchedule::new(0.0, 1.0, 1.0, AlmTuning::default()).is_err());
        assert!(AlmSchedule::new(1.0, -1.0, 1.0, AlmTuning::default()).is_err());
        let bad = AlmTuning {
            c3: 0.0,
            ..AlmTuning::default()
        };
        assert!(AlmSchedule::new(1.0, 1.0, 1.0, bad).is_err());
    }

    #[test]
    fn increment_matches_direct_difference_when_well_conditioned() {
        let s = default_alm().with_k0(5.0).unwrap();
        for k in [1u64, 2, 10, 1000] {
            let direct = s.inv_eta(k + 1) - s.inv_eta(k);
            let stable = s.inv_eta_increment(k);
            assert!((direct - stable).abs() <= 1e-10 * direct.abs(), "k={k}");
        }
    }

    #[test]
    fn penalty_examples() {
        let s = PenaltySchedule::stochastic(1.0 + 1e-6, 1.0).unwrap();
        assert!((s.alpha_next(0) - 72.0 / 81.0).abs() < 1e-15);
        let s1 = PenaltySchedule::stochastic(1.0, 1.0).unwrap();
        assert_eq!(s1.rho_base(), MIN_RHO_BASE);
        let d = PenaltySchedule::deterministic(2.0, 1.0).unwrap();
        assert!((d.rho(16) / 2.0 - 2.0).abs() < 1e-15);
        assert!((d.alpha_next(8) * 3.0 - 72.0 / 81.0).abs() < 1e-15);
    }

    #[test]
    fn dual_gamma_examples() {
        let p = PenaltySchedule::stochastic(2.0, 1.0).unwrap();
        let d = DualSchedule::new(1.0, p).unwrap();
        let expected = 1.0 / 2f64.ln().powi(2);
        assert!((d.dual_gamma(1, 1.0) - expected).abs() < 1e-12);
        assert!((expected - 2.0814).abs() < 1e-4);
        assert_eq!(d.dual_gamma(1, 1e-15), 0.0);
        assert!((d.dual_increment(3, -0.2).abs() - d.increment_magnitude(3)).abs() < 1e-15);
        assert!(d.dual_increment(3, -0.2) < 0.0);
        assert!(DualSchedule::new(0.0, p).is_err());
    }

    #[test]
    fn l_tilde_examples() {
        let mut k = AssumptionConstants {
            l_tilde_grad_f: 1.0,
            ..Default::default()
        };
        assert!((l_tilde(&k, 1, SmoothnessRegime::Stochastic).unwrap() - 2.0).abs() < 1e-15);
        k.c_tilde_c = 1.0;
        k.l_tilde_grad_c = 1.0;
        k.c_tilde_grad_c = 1.0;
        k.l_tilde_c = 1.0;
        assert!((l_tilde(&k, 1, SmoothnessRegime::Stochastic).unwrap() - 12f64.sqrt()).abs() < 1e-14);
        let dual = SmoothnessRegime::Dual {
            initial_multiplier_norm: 0.0,
        };
        assert!((l_tilde(&k, 1, dual).unwrap() - 15.75f64.sqrt()).abs() < 1e-14);
        assert!(l_tilde(&AssumptionConstants::default(), 1, SmoothnessRegime::Stochastic).is_err());
    }

    #[test]
    fn grid_is_bounded_and_increasing() {
        let g = validation_grid(1_000_000);
        assert!(g.len() <= 10_000);
        assert_eq!(g[0], 1);
        assert_eq!(*g.last().unwrap(), 1_000_000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(validation_grid(5), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn first_stochastic_step() {
        let s = PenaltySchedule::stochastic(1.0, 1.0).unwrap();
        assert!((s.eta(1) - 1.0 / (9.0 * MIN_RHO_BASE * 2f64.powf(0.6))).abs() < 1e-15);
        assert!((s.eta(1) - 0.07331).abs() < 1e-5);
        assert!((s.rho(1) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn momentum_identity_holds_for_both_regimes() {
        for s in [
            PenaltySchedule::stochastic(3.0, 7.0).unwrap(),
            PenaltySchedule::deterministic(1.5, 0.2).unwrap(),
        ] {
            for k in [0u64, 1, 2, 17, 1000, 123_456] {
                let lhs = 72.0 * s.l_tilde().powi(2) * s.rho(k + 1).powi(2) * s.eta(k).powi(2);
                assert!((lhs / s.alpha_next(k) - 1.0).abs() < 1e-13, "k={k}");
            }
        }
        let d = PenaltySchedule::deterministic(2.0, 1.0).unwrap();
        for k in [0u64, 3, 99] {
            assert!((d.alpha_next(k) * (k as f64 + 1.0).sqrt() - 72.0 / 81.0).abs() < 1e-15);
        }
    }

    #[test]
    fn alm_step_sizes_decrease_and_ratio_is_c() {
        let s = default_alm().with_k0(3.0).unwrap();
        for k in 1..200u64 {
            assert!(s.eta(k + 1) < s.eta(k));
            assert!(s.eta(k) <= 2.0 * s.eta(k + 1));
            if s.alpha(k) < 1.0 {
                assert!((s.alpha(k) / s.eta(k).powi(2) / s.c() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn default_offset_passes_sabotaged_offset_fails() {
        let s = default_alm();
        let ok = validate_alm_schedule(&s, 1_000_000).unwrap();
        assert!(ok.all_pass(), "{:?}", ok.first_violation);
        let bad = validate_alm_schedule(&s.with_k0(1.0).unwrap(), 1_000_000).unwrap();
        assert!(!bad.all_pass());
        let v = bad.first_violation.unwrap();
        assert!(v.lhs > v.rhs);
    }

    #[test]
    fn step_ratio_inequality_holds_for_small_offsets() {
        for k0 in [2.0, 2.5, 10.0] {
            let s = default_alm().with_k0(k0).unwrap();
            let r = validate_alm_schedule(&s, 100_000).unwrap();
            assert!(r.passed[5], "k0={k0}");
        }
    }

    #[test]
    fn allowance_weights_are_summable() {
        let s = default_alm().with_k0(2.0).unwrap();
        let mut total = 0.0;
        let mut at_1e5 = 0.0;
        for k in 1..=1_000_000u64 {
            let v = s.allowance_weight(k);
            assert!(v > 0.0);
            total += v;
            if k == 100_000 {
                at_1e5 = total;
            }
        }
        assert!(total.is_finite());
        assert!((total - at_1e5) / total < 0.05, "partial sums still growing: {at_1e5} -> {total}");
    }
}
