//! Optimality diagnostics: the integral stationarity condition and the
//! equivalent boundary-value ODE.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, uniform_grid};
use crate::strategy::{ImpactParameters, OptimalStrategy, TradingSchedule};

/// Tolerance applied to each scaled residual of the ODE check.
pub const ODE_TOLERANCE: f64 = 1e-6;

/// Tolerance on `int z dt + blocks = x0`, relative to `x0`.
pub const ODE_MASS_TOLERANCE: f64 = 1e-8;

/// Samples `xi_t + (gamma / 2 eta) int xi_s e^{-rho |t - s|} ds` on a uniform grid.
///
/// Block trades enter the integral as point masses at `0` and `T`.
pub fn stationarity_profile(
    schedule: &TradingSchedule,
    params: &ImpactParameters,
    grid_points: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    params.validate()?;
    if params.gamma <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: "stationarity condition requires gamma > 0".into(),
        });
    }
    let n = grid_points.max(3);
    let tt = schedule.horizon;
    let grid = uniform_grid(0.0, tt, n);
    let rho = params.rho;
    let rate = |t: f64| schedule.rate_at(t);

    // left[i] = int_0^{t_i} xi_s e^{-rho (t_i - s)} ds, right[i] likewise over [t_i, T].
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    for i in 1..n {
        let (a, b) = (grid[i - 1], grid[i]);
        left[i] = left[i - 1] * (-rho * (b - a)).exp() + panel(&rate, rho, a, b, b);
    }
    for i in (0..n - 1).rev() {
        let (a, b) = (grid[i], grid[i + 1]);
        right[i] = right[i + 1] * (-rho * (b - a)).exp() + panel(&rate, rho, a, b, a);
    }

    let scale = 0.5 * params.gamma / params.eta;
    let values = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let blocks = schedule.initial_block * (-rho * t).exp()
                + schedule.terminal_block * (-rho * (tt - t)).exp();
            rate(t) + scale * (left[i] + right[i] + blocks)
        })
        .collect();
    Ok((grid, values))
}

/// Simpson panel of `xi_s e^{-rho |anchor - s|}` over `[a, b]`.
fn panel(rate: &impl Fn(f64) -> f64, rho: f64, a: f64, b: f64, anchor: f64) -> f64 {
    let m = 0.5 * (a + b);
    let w = |s: f64| rate(s) * (-rho * (anchor - s).abs()).exp();
    (b - a) / 6.0 * (w(a) + 4.0 * w(m) + w(b))
}

/// Relative spread `(max - min) / mean` of the stationarity profile.
///
/// Zero for the optimal schedule; strictly positive for any other admissible one.
pub fn stationarity_residual(
    schedule: &TradingSchedule,
    params: &ImpactParameters,
    grid_points: usize,
) -> Result<f64> {
    let (_, values) = stationarity_profile(schedule, params, grid_points)?;
    let (lo, hi, sum) = values.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, 0.0),
        |(lo, hi, sum), &v| (lo.min(v), hi.max(v), sum + v),
    );
    let mean = sum / values.len() as f64;
    if mean == 0.0 {
        return Err(Error::Numeric("stationarity profile has zero mean".into()));
    }
    Ok((hi - lo) / mean.abs())
}

/// Stationary level `C` of the optimal schedule.
pub fn stationarity_constant(strategy: &OptimalStrategy) -> f64 {
    strategy.stationarity_constant()
}

/// Scaled residuals of the ODE characterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeCheck {
    /// `max |z'' - k^2 z + rho^2 C| / (k^2 max |z|)` over interior points.
    pub ode_residual: f64,
    /// `|z'(0) + rho (C - z(0))| / (k max |z|)`.
    pub left_boundary: f64,
    /// `|z'(T) - rho (C - z(T))| / (k max |z|)`.
    pub right_boundary: f64,
    /// `|int z + blocks - x0| / x0`.
    pub mass: f64,
    pub passed: bool,
}

/// Checks `z'' - k^2 z = -rho^2 C` with `z'(0) = -rho (C - z(0))`,
/// `z'(T) = rho (C - z(T))` and `int z = x0` by finite differences.
pub fn ode_characterization_check(
    schedule: &TradingSchedule,
    params: &ImpactParameters,
    c: f64,
) -> Result<OdeCheck> {
    params.validate()?;
    let tt = schedule.horizon;
    let (k, rho) = (params.k(), params.rho);
    let h = (1e-3 / k).min(1e-4 * tt);
    let z = |t: f64| schedule.rate_at(t);

    let samples = 401;
    let interior = uniform_grid(h, tt - h, samples);
    let zmax = uniform_grid(0.0, tt, samples)
        .iter()
        .map(|&t| z(t).abs())
        .fold(0.0, f64::max);
    if zmax == 0.0 {
        return Err(Error::Degenerate("rate vanishes identically".into()));
    }

    let ode_residual = interior
        .iter()
        .map(|&t| {
            let d2 = (z(t + h) - 2.0 * z(t) + z(t - h)) / (h * h);
            (d2 - k * k * z(t) + rho * rho * c).abs()
        })
        .fold(0.0, f64::max)
        / (k * k * zmax);

    // Fourth-order one-sided first derivatives.
    let one_sided = |t0: f64, dir: f64| {
        let f = |j: f64| z(t0 + dir * j * h);
        dir * (-25.0 * f(0.0) + 48.0 * f(1.0) - 36.0 * f(2.0) + 16.0 * f(3.0) - 3.0 * f(4.0))
            / (12.0 * h)
    };
    let d0 = one_sided(0.0, 1.0);
    let d_t = one_sided(tt, -1.0);
    let left_boundary = (d0 + rho * (c - z(0.0))).abs() / (k * zmax);
    let right_boundary = (d_t - rho * (c - z(tt))).abs() / (k * zmax);

    let x0 = schedule.x0;
    let integral = adaptive_simpson(&z, 0.0, tt, 1e-11 * x0);
    let mass =
        (integral + schedule.initial_block + schedule.terminal_block - x0).abs() / x0;

    let passed = ode_residual <= ODE_TOLERANCE
        && left_boundary <= ODE_TOLERANCE
        && right_boundary <= ODE_TOLERANCE
        && mass <= ODE_MASS_TOLERANCE;
    Ok(OdeCheck {
        ode_residual,
        left_boundary,
        right_boundary,
        mass,
        passed,
    })
}
