//! Liquidation schedules: the closed-form optimal strategy under combined
//! instantaneous, permanent and transient impact, and its two benchmark
//! limits (TWAP when `gamma = 0`, block-plus-constant when `gamma / eta` is
//! large).
//!
//! The optimal rate is evaluated in a form divided through by `cosh(kT/2)`,
//! which keeps every intermediate quantity bounded for any `kT`:
//!
//! ```text
//! xi(t) = k x0 (eta (rho + k tanh h) + gamma cosh(k u) / cosh h)
//!         / (k rho eta T + tanh h (2 gamma + k^2 eta T)),    h = kT/2, u = t - T/2
//! ```
//!
//! This is the same expression as the textbook form after substituting
//! `k^2 eta - gamma rho = rho^2 eta`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::quadrature::{adaptive_simpson, uniform_grid};
use crate::units::PriceUnit;

/// Impact parameters `(eta, gamma, lambda, rho)`.
///
/// `eta`, `gamma` and `lambda` share one price unit (`unit`); `rho` is in 1/seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactParameters {
    /// Instantaneous impact.
    pub eta: f64,
    /// Transient impact: jump in the impact state per share traded.
    pub gamma: f64,
    /// Permanent impact.
    pub lambda: f64,
    /// Resilience of the transient impact, 1/seconds.
    pub rho: f64,
    pub unit: PriceUnit,
}

impl ImpactParameters {
    pub fn new(eta: f64, gamma: f64, lambda: f64, rho: f64) -> Result<Self> {
        let p = ImpactParameters {
            eta,
            gamma,
            lambda,
            rho,
            unit: PriceUnit::BasisPoints,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_unit(mut self, unit: PriceUnit) -> Self {
        self.unit = unit;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.eta.is_finite() && self.eta > 0.0, "eta", || {
            format!("must be positive, got {}", self.eta)
        })?;
        ensure(self.rho.is_finite() && self.rho > 0.0, "rho", || {
            format!("must be positive, got {}", self.rho)
        })?;
        ensure(self.gamma.is_finite() && self.gamma >= 0.0, "gamma", || {
            format!("must be nonnegative, got {}", self.gamma)
        })?;
        ensure(self.lambda.is_finite() && self.lambda >= 0.0, "lambda", || {
            format!("must be nonnegative, got {}", self.lambda)
        })
    }

    /// `k = sqrt(rho (rho + gamma / eta))`, 1/seconds.
    pub fn k(&self) -> f64 {
        (self.rho * (self.rho + self.gamma / self.eta)).sqrt()
    }

    /// `gamma / eta`.
    pub fn impact_ratio(&self) -> f64 {
        self.gamma / self.eta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiquidationProblem {
    /// Initial position, shares.
    pub x0: f64,
    /// Horizon, seconds.
    pub horizon: f64,
    pub params: ImpactParameters,
}

impl LiquidationProblem {
    pub fn new(x0: f64, horizon: f64, params: ImpactParameters) -> Result<Self> {
        ensure(x0.is_finite() && x0 > 0.0, "x0", || {
            format!("must be positive, got {x0}")
        })?;
        ensure(horizon.is_finite() && horizon > 0.0, "horizon", || {
            format!("must be positive, got {horizon}")
        })?;
        params.validate()?;
        Ok(LiquidationProblem {
            x0,
            horizon,
            params,
        })
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::OutOfHorizon {
                t,
                horizon: self.horizon,
            })
        }
    }
}

/// `cosh(x) / cosh(h)` for `|x| <= h` without overflow.
fn cosh_ratio(x: f64, h: f64) -> f64 {
    let a = x.abs();
    (a - h).exp() * (1.0 + (-2.0 * a).exp()) / (1.0 + (-2.0 * h).exp())
}

/// `sinh(x) / cosh(h)` for `|x| <= h` without overflow.
fn sinh_ratio(x: f64, h: f64) -> f64 {
    let a = x.abs();
    x.signum() * (a - h).exp() * (1.0 - (-2.0 * a).exp()) / (1.0 + (-2.0 * h).exp())
}

/// Precomputed closed-form optimal strategy for one problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalStrategy {
    problem: LiquidationProblem,
    k: f64,
    half_kt: f64,
    /// Constant part of the rate.
    base: f64,
    /// Coefficient of `cosh(k(t - T/2)) / cosh(kT/2)`.
    bump: f64,
    // Holdings: X = x0 - x0 (a + b t + c sinh(k u)/cosh h) / (2a + bT)
    a: f64,
    b: f64,
    c: f64,
}

impl OptimalStrategy {
    pub fn new(problem: LiquidationProblem) -> Result<Self> {
        let LiquidationProblem { x0, horizon, params } = problem;
        let ImpactParameters {
            eta, gamma, rho, ..
        } = params;
        let k = params.k();
        let h = 0.5 * k * horizon;
        let th = h.tanh();
        let denom = k * rho * eta * horizon + th * (2.0 * gamma + k * k * eta * horizon);
        if !(denom.is_finite() && denom > f64::MIN_POSITIVE) {
            return Err(Error::Degenerate(format!(
                "optimal-rate denominator is {denom:e} for k = {k:e}"
            )));
        }
        let base = k * x0 * eta * (rho + k * th) / denom;
        let bump = k * x0 * gamma / denom;
        let c = gamma / eta;
        let a = th * c;
        let b = k * rho + k * k * th;
        if !(base.is_finite() && bump.is_finite() && (2.0 * a + b * horizon) > 0.0) {
            return Err(Error::Degenerate(format!(
                "non-finite optimal strategy coefficients (k = {k:e})"
            )));
        }
        Ok(OptimalStrategy {
            problem,
            k,
            half_kt: h,
            base,
            bump,
            a,
            b,
            c,
        })
    }

    pub fn problem(&self) -> &LiquidationProblem {
        &self.problem
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Rate without the horizon check; callers guarantee `t` in `[0, T]`.
    pub(crate) fn rate_at(&self, t: f64) -> f64 {
        let u = self.k * (t - 0.5 * self.problem.horizon);
        self.base + self.bump * cosh_ratio(u, self.half_kt)
    }

    pub(crate) fn holdings_at(&self, t: f64) -> f64 {
        let x0 = self.problem.x0;
        let horizon = self.problem.horizon;
        if t <= 0.0 {
            return x0;
        }
        if t >= horizon {
            return 0.0;
        }
        let u = self.k * (t - 0.5 * horizon);
        let frac = (self.a + self.b * t + self.c * sinh_ratio(u, self.half_kt))
            / (2.0 * self.a + self.b * horizon);
        x0 - x0 * frac
    }

    pub fn rate(&self, t: f64) -> Result<f64> {
        self.problem.check_time(t)?;
        let r = self.rate_at(t);
        if r.is_finite() {
            Ok(r)
        } else {
            Err(Error::Degenerate(format!("optimal rate at t = {t} is {r}")))
        }
    }

    pub fn holdings(&self, t: f64) -> Result<f64> {
        self.problem.check_time(t)?;
        Ok(self.holdings_at(t))
    }

    /// The constant `C` of the stationarity condition
    /// `(gamma / 2 eta) int xi_s e^{-rho|t-s|} ds + xi_t = C`.
    pub fn stationarity_constant(&self) -> f64 {
        let rho = self.problem.params.rho;
        self.k * self.k * self.base / (rho * rho)
    }
}

/// Optimal trading rate at `t`, shares/second.
pub fn optimal_rate(problem: &LiquidationProblem, t: f64) -> Result<f64> {
    OptimalStrategy::new(*problem)?.rate(t)
}

/// Optimal holdings at `t`, shares.
pub fn optimal_path(problem: &LiquidationProblem, t: f64) -> Result<f64> {
    OptimalStrategy::new(*problem)?.holdings(t)
}

pub fn twap_rate(x0: f64, horizon: f64) -> f64 {
    x0 / horizon
}

/// Size of each of the two block trades of the large-`gamma/eta` limit.
pub fn ow_block_size(x0: f64, rho: f64, horizon: f64) -> f64 {
    x0 / (rho * horizon + 2.0)
}

/// Holdings of the block-plus-constant limit,
/// `x0 - x0 / (rho T + 2) (H_0(t) + rho t + H_T(t))` with right-continuous steps.
pub fn ow_limit_path(x0: f64, rho: f64, horizon: f64, t: f64) -> Result<f64> {
    ensure(rho.is_finite() && rho > 0.0, "rho", || {
        format!("must be positive, got {rho}")
    })?;
    ensure(horizon.is_finite() && horizon > 0.0, "horizon", || {
        format!("must be positive, got {horizon}")
    })?;
    let heaviside = |a: f64| if t >= a { 1.0 } else { 0.0 };
    let block = ow_block_size(x0, rho, horizon);
    Ok(x0 - block * (heaviside(0.0) + rho * t + heaviside(horizon)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScheduleKind {
    /// Optimal under all three impact components.
    All,
    /// Instantaneous impact only: TWAP.
    Ins,
    /// Transient impact only: block trades at both ends plus a constant rate.
    Tmp,
    Custom,
}

impl ScheduleKind {
    pub fn label(self) -> &'static str {
        match self {
            ScheduleKind::All => "ALL",
            ScheduleKind::Ins => "INS",
            ScheduleKind::Tmp => "TMP",
            ScheduleKind::Custom => "CUSTOM",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub type RateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum RateProfile {
    Optimal(OptimalStrategy),
    Constant(f64),
    Custom(RateFn),
}

impl fmt::Debug for RateProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateProfile::Optimal(s) => f.debug_tuple("Optimal").field(s).finish(),
            RateProfile::Constant(r) => f.debug_tuple("Constant").field(r).finish(),
            RateProfile::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// One row of a tabulated schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleRow {
    pub t: f64,
    pub rate: f64,
    pub holdings: f64,
}

/// A liquidation program: a trading rate on `[0, T]` plus optional block
/// trades at `t = 0` and `t = T`.
///
/// Holdings are right-continuous: `holdings(0)` is already net of the initial
/// block and `holdings(T)` net of the terminal one.
#[derive(Debug, Clone)]
pub struct TradingSchedule {
    pub kind: ScheduleKind,
    pub x0: f64,
    pub horizon: f64,
    pub initial_block: f64,
    pub terminal_block: f64,
    pub profile: RateProfile,
    pub grid: Vec<f64>,
}

impl TradingSchedule {
    /// The optimal schedule for `problem`.
    pub fn optimal(problem: &LiquidationProblem, grid_points: usize) -> Result<Self> {
        let strategy = OptimalStrategy::new(*problem)?;
        Ok(TradingSchedule {
            kind: ScheduleKind::All,
            x0: problem.x0,
            horizon: problem.horizon,
            initial_block: 0.0,
            terminal_block: 0.0,
            profile: RateProfile::Optimal(strategy),
            grid: uniform_grid(0.0, problem.horizon, grid_points),
        })
    }

    pub fn twap(x0: f64, horizon: f64, grid_points: usize) -> Result<Self> {
        ensure(x0 > 0.0, "x0", || format!("must be positive, got {x0}"))?;
        ensure(horizon > 0.0, "horizon", || {
            format!("must be positive, got {horizon}")
        })?;
        Ok(TradingSchedule {
            kind: ScheduleKind::Ins,
            x0,
            horizon,
            initial_block: 0.0,
            terminal_block: 0.0,
            profile: RateProfile::Constant(twap_rate(x0, horizon)),
            grid: uniform_grid(0.0, horizon, grid_points),
        })
    }

    /// Two blocks of `x0 / (rho T + 2)` with a constant rate `rho` times the
    /// block size in between.
    pub fn obizhaeva_wang(x0: f64, rho: f64, horizon: f64, grid_points: usize) -> Result<Self> {
        ensure(x0 > 0.0, "x0", || format!("must be positive, got {x0}"))?;
        ensure(rho > 0.0, "rho", || format!("must be positive, got {rho}"))?;
        ensure(horizon > 0.0, "horizon", || {
            format!("must be positive, got {horizon}")
        })?;
        let block = ow_block_size(x0, rho, horizon);
        Ok(TradingSchedule {
            kind: ScheduleKind::Tmp,
            x0,
            horizon,
            initial_block: block,
            terminal_block: block,
            profile: RateProfile::Constant(rho * block),
            grid: uniform_grid(0.0, horizon, grid_points),
        })
    }

    pub fn custom(
        x0: f64,
        horizon: f64,
        rate: RateFn,
        initial_block: f64,
        terminal_block: f64,
        grid_points: usize,
    ) -> Result<Self> {
        ensure(x0 > 0.0, "x0", || format!("must be positive, got {x0}"))?;
        ensure(horizon > 0.0, "horizon", || {
            format!("must be positive, got {horizon}")
        })?;
        Ok(TradingSchedule {
            kind: ScheduleKind::Custom,
            x0,
            horizon,
            initial_block,
            terminal_block,
            profile: RateProfile::Custom(rate),
            grid: uniform_grid(0.0, horizon, grid_points),
        })
    }

    /// `self` with `epsilon * perturbation(t)` added to the rate.
    pub fn perturbed(&self, epsilon: f64, perturbation: RateFn) -> Self {
        let base = self.clone();
        let rate: RateFn = Arc::new(move |t| base.rate_at(t) + epsilon * perturbation(t));
        TradingSchedule {
            kind: ScheduleKind::Custom,
            x0: self.x0,
            horizon: self.horizon,
            initial_block: self.initial_block,
            terminal_block: self.terminal_block,
            profile: RateProfile::Custom(rate),
            grid: self.grid.clone(),
        }
    }

    pub fn with_grid_points(mut self, grid_points: usize) -> Self {
        self.grid = uniform_grid(0.0, self.horizon, grid_points);
        self
    }

    pub(crate) fn rate_at(&self, t: f64) -> f64 {
        match &self.profile {
            RateProfile::Optimal(s) => s.rate_at(t),
            RateProfile::Constant(r) => *r,
            RateProfile::Custom(f) => f(t),
        }
    }

    pub fn rate(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfHorizon {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.rate_at(t))
    }

    /// Shares sold through the rate over `[0, t]`, blocks excluded.
    pub fn continuous_sold(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.horizon);
        match &self.profile {
            RateProfile::Optimal(s) => self.x0 - s.holdings_at(t),
            RateProfile::Constant(r) => r * t,
            RateProfile::Custom(f) => {
                let tol = 1e-13 * self.x0.max(1.0);
                adaptive_simpson(&|s| f(s), 0.0, t, tol)
            }
        }
    }

    pub fn holdings(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfHorizon {
                t,
                horizon: self.horizon,
            });
        }
        let terminal = if t >= self.horizon {
            self.terminal_block
        } else {
            0.0
        };
        Ok(self.x0 - self.initial_block - self.continuous_sold(t) - terminal)
    }

    /// Total shares sold: both blocks plus the integrated rate.
    pub fn total_sold(&self) -> f64 {
        self.initial_block + self.continuous_sold(self.horizon) + self.terminal_block
    }

    /// Checks `initial + int xi + terminal = x0` within `rel_tol * x0`.
    pub fn check_liquidation(&self, rel_tol: f64) -> Result<()> {
        let sold = self.total_sold();
        if (sold - self.x0).abs() <= rel_tol * self.x0 {
            Ok(())
        } else {
            Err(Error::ConstraintViolation { sold, x0: self.x0 })
        }
    }

    pub fn table(&self) -> Vec<ScheduleRow> {
        self.grid
            .iter()
            .map(|&t| ScheduleRow {
                t,
                rate: self.rate_at(t),
                holdings: self.holdings(t).unwrap_or(f64::NAN),
            })
            .collect()
    }
}
