//! Transient impact state and execution-cost functionals.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{simpson_samples, uniform_grid};
use crate::strategy::{ImpactParameters, TradingSchedule};
use crate::units::PriceUnit;

/// Tolerance on `blocks + int xi = x0`, relative to `x0`.
pub const LIQUIDATION_TOLERANCE: f64 = 1e-9;

/// `rho * step` above which the impact grid is considered too coarse.
pub const COARSE_GRID_THRESHOLD: f64 = 0.1;

/// Quadrature steps per decay length `1/rho` and per boundary-layer width `1/k`.
pub const STEPS_PER_SCALE: f64 = 16.0;

/// Upper bound on quadrature points for one cost evaluation.
pub const MAX_COST_POINTS: usize = 4_000_001;

/// Sampled transient impact `Y_t`.
///
/// Values are right-continuous at `t = 0` (the initial block has already moved
/// the state) and left limits at `t = T` (the terminal block is not included).
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Set when some grid step exceeds `COARSE_GRID_THRESHOLD / rho`.
    pub coarse: bool,
}

/// Solves `dY = (gamma xi - rho Y) dt`, `Y_0 = 0`, on `grid`.
///
/// Each step is integrated exactly for the decay and with Simpson's rule for
/// the forcing, `Y_{i+1} = Y_i e^{-rho h} + gamma int xi_s e^{-rho (t_{i+1} - s)} ds`.
pub fn temporary_impact_path(
    schedule: &TradingSchedule,
    gamma: f64,
    rho: f64,
    grid: &[f64],
) -> Result<ImpactPath> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: "empty".into(),
        });
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: "must be nondecreasing".into(),
        });
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut coarse = false;
    let mut y = if grid[0] <= 0.0 {
        gamma * schedule.initial_block
    } else {
        0.0
    };
    // A grid that does not start at zero is integrated from zero first.
    if grid[0] > 0.0 {
        y = step(schedule, gamma, rho, 0.0, grid[0], gamma * schedule.initial_block);
        coarse |= rho * grid[0] > COARSE_GRID_THRESHOLD;
    }
    values.push(y);
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        coarse |= rho * (b - a) > COARSE_GRID_THRESHOLD;
        y = step(schedule, gamma, rho, a, b, y);
        values.push(y);
    }
    if coarse {
        log::warn!("impact grid too coarse: rho * step exceeds {COARSE_GRID_THRESHOLD}");
    }
    Ok(ImpactPath {
        times: grid.to_vec(),
        values,
        coarse,
    })
}

fn step(schedule: &TradingSchedule, gamma: f64, rho: f64, a: f64, b: f64, y: f64) -> f64 {
    let h = b - a;
    if h <= 0.0 {
        return y;
    }
    let decay = (-rho * h).exp();
    let half = (-0.5 * rho * h).exp();
    let m = 0.5 * (a + b);
    let forcing = h / 6.0
        * (schedule.rate_at(a) * decay + 4.0 * schedule.rate_at(m) * half + schedule.rate_at(b));
    y * decay + gamma * forcing
}

/// Cost decomposition of one schedule, in the price unit of the parameters
/// times shares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    /// `eta int xi^2 dt`, plus `eta * block^2` for each block trade.
    pub instantaneous: f64,
    /// `int xi_t Y_t dt`, plus `block * (Y_- + gamma block / 2)` for each block.
    pub transient: f64,
    /// `lambda x0`; the same for every schedule and excluded from `total`.
    pub permanent: f64,
    /// `instantaneous + transient`.
    pub total: f64,
    /// `total` as a percentage of the notional `x0 * S0`.
    pub pct_of_notional: f64,
    pub unit: PriceUnit,
    /// The schedule buys at some grid point.
    pub negative_rate: bool,
    /// Block trades were priced with the discrete-trade convention.
    pub block_convention: bool,
}

/// Expected execution cost of `schedule` under `params`, for reference price `s0`.
pub fn execution_cost(
    schedule: &TradingSchedule,
    params: &ImpactParameters,
    s0: f64,
) -> Result<CostBreakdown> {
    params.validate()?;
    if !(s0.is_finite() && s0 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "s0",
            reason: format!("must be positive, got {s0}"),
        });
    }
    schedule.check_liquidation(LIQUIDATION_TOLERANCE)?;

    // Every schedule under `params` gets the same resolution, so costs compare.
    let scale = params.rho.max(params.k());
    let resolved = (STEPS_PER_SCALE * scale * schedule.horizon).ceil() as usize + 1;
    let points = schedule.grid.len().max(resolved).clamp(3, MAX_COST_POINTS);
    let grid = uniform_grid(0.0, schedule.horizon, points);
    let h = grid[1] - grid[0];
    let rates: Vec<f64> = grid.iter().map(|&t| schedule.rate_at(t)).collect();
    let negative_rate = rates.iter().any(|&r| r < 0.0);
    if negative_rate {
        log::warn!("schedule has negative trading rates");
    }
    let impact = temporary_impact_path(schedule, params.gamma, params.rho, &grid)?;

    let squares: Vec<f64> = rates.iter().map(|r| r * r).collect();
    let products: Vec<f64> = rates
        .iter()
        .zip(&impact.values)
        .map(|(r, y)| r * y)
        .collect();

    let (b0, b1) = (schedule.initial_block, schedule.terminal_block);
    let mut instantaneous = params.eta * simpson_samples(&squares, h);
    let mut transient = simpson_samples(&products, h);
    if b0 != 0.0 || b1 != 0.0 {
        instantaneous += params.eta * (b0 * b0 + b1 * b1);
        let y_end = *impact.values.last().expect("grid is non-empty");
        transient += b0 * (0.5 * params.gamma * b0) + b1 * (y_end + 0.5 * params.gamma * b1);
    }
    let total = instantaneous + transient;
    let pct_of_notional = 100.0 * params.unit.to_fraction(total / schedule.x0, s0);
    Ok(CostBreakdown {
        instantaneous,
        transient,
        permanent: params.lambda * schedule.x0,
        total,
        pct_of_notional,
        unit: params.unit,
        negative_rate,
        block_convention: b0 != 0.0 || b1 != 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::simpson;
    use crate::strategy::{LiquidationProblem, RateFn};
    use std::sync::Arc;

    fn params() -> ImpactParameters {
        ImpactParameters::new(0.00226, 0.0032, 0.0032, 2.0354e-5).unwrap()
    }

    #[test]
    fn zero_rate_gives_zero_impact() {
        let zero: RateFn = Arc::new(|_| 0.0);
        let s = TradingSchedule::custom(1.0, 10.0, zero, 0.5, 0.5, 11).unwrap();
        let path = temporary_impact_path(&s, 0.0, 0.1, &s.grid).unwrap();
        assert!(path.values.iter().all(|&y| y == 0.0));
    }

    #[test]
    fn twap_terminal_impact() {
        let (x0, tt, gamma, rho) = (1e5, 19_800.0, 0.0032, 2.0354e-5);
        let s = TradingSchedule::twap(x0, tt, 2049).unwrap();
        let path = temporary_impact_path(&s, gamma, rho, &s.grid).unwrap();
        let expected = x0 * gamma / (tt * rho) * (1.0 - (-rho * tt).exp());
        let got = *path.values.last().unwrap();
        assert!((got - expected).abs() < 1e-12 * expected);
        assert!(!path.coarse);
    }

    #[test]
    fn impact_matches_direct_convolution() {
        let p = LiquidationProblem::new(1e5, 10_000.0, params()).unwrap();
        let s = TradingSchedule::optimal(&p, 2049).unwrap();
        let (gamma, rho) = (p.params.gamma, p.params.rho);
        let path = temporary_impact_path(&s, gamma, rho, &s.grid).unwrap();
        for i in [1usize, 100, 1024, 2000, 2048] {
            let t = s.grid[i];
            let direct = gamma
                * simpson(|u| s.rate(u).unwrap() * (-rho * (t - u)).exp(), 0.0, t, 200_000);
            assert!(
                (path.values[i] - direct).abs() <= 1e-8 * direct,
                "t={t}: {} vs {direct}",
                path.values[i]
            );
        }
    }

    #[test]
    fn coarse_grid_is_flagged() {
        let s = TradingSchedule::twap(1.0, 100.0, 3).unwrap();
        let path = temporary_impact_path(&s, 1.0, 0.01, &s.grid).unwrap();
        assert!(path.coarse);
    }

    #[test]
    fn twap_costs_match_closed_forms() {
        let p = params();
        let (x0, tt) = (199_400.0, 19_800.0);
        let s = TradingSchedule::twap(x0, tt, 2049).unwrap();
        let c = execution_cost(&s, &p, 48.625).unwrap();
        let e = p.eta * x0 * x0 / tt;
        let rho = p.rho;
        let f = p.gamma * (x0 / tt).powi(2) * (tt / rho - (1.0 - (-rho * tt).exp()) / (rho * rho));
        assert!((c.instantaneous - e).abs() < 1e-12 * e);
        assert!((c.transient - f).abs() < 1e-10 * f);
        assert_eq!(c.permanent, p.lambda * x0);
        assert!((c.total - (e + f)).abs() < 1e-10 * (e + f));
        assert!((c.pct_of_notional - 100.0 * (e + f) / x0 / 1e4).abs() < 1e-12);
        assert!(!c.negative_rate && !c.block_convention);
    }

    #[test]
    fn block_trades_use_discrete_convention() {
        let p = params();
        let (x0, tt) = (1e5, 19_800.0);
        let s = TradingSchedule::obizhaeva_wang(x0, p.rho, tt, 2049).unwrap();
        let c = execution_cost(&s, &p, 50.0).unwrap();
        let block = s.initial_block;
        // The impact state stays at gamma * block through the interior.
        let f = p.gamma * block * block * (2.0 + p.rho * tt);
        assert!((c.transient - f).abs() < 1e-9 * f);
        let e = p.eta * ((p.rho * block).powi(2) * tt + 2.0 * block * block);
        assert!((c.instantaneous - e).abs() < 1e-9 * e);
        assert!(c.block_convention);
    }

    #[test]
    fn constraint_violation_is_an_error() {
        let half: RateFn = Arc::new(|_| 1.0);
        let s = TradingSchedule::custom(100.0, 50.0, half, 0.0, 0.0, 11).unwrap();
        assert!(matches!(
            execution_cost(&s, &params(), 10.0),
            Err(Error::ConstraintViolation { .. })
        ));
    }

    #[test]
    fn negative_rates_are_flagged() {
        let r: RateFn = Arc::new(|t: f64| 2.0 - 2.0 * (t - 5.0).abs() / 5.0 * 1.5 + 0.5);
        // Integral over [0, 10]: 25 - 15 = 10.
        let s = TradingSchedule::custom(10.0, 10.0, r, 0.0, 0.0, 101).unwrap();
        let c = execution_cost(&s, &params(), 10.0).unwrap();
        assert!(c.negative_rate);
    }
}
