//! Exponential-kernel Hawkes process: likelihood, simulation, estimation and
//! the resilience implied by the branching ratio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Upper bound imposed on the branching ratio during estimation.
pub const MAX_BRANCHING: f64 = 1.0 - 1e-6;

/// Intensity `nu + sum_{t_j < t} A e^{-B (t - t_j)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HawkesParameters {
    pub nu: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

impl HawkesParameters {
    pub fn new(nu: f64, a: f64, b: f64) -> Result<Self> {
        let p = Self { nu, a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.nu.is_finite() && self.nu > 0.0, "nu", || {
            format!("must be positive, got {}", self.nu)
        })?;
        ensure(self.a.is_finite() && self.a >= 0.0, "A", || {
            format!("must be nonnegative, got {}", self.a)
        })?;
        ensure(self.b.is_finite() && self.b > 0.0, "B", || {
            format!("must be positive, got {}", self.b)
        })?;
        if self.branching_ratio() >= 1.0 {
            return Err(Error::NonStationary(self.branching_ratio()));
        }
        Ok(())
    }

    /// `A / B`, the expected number of direct children per event.
    pub fn branching_ratio(&self) -> f64 {
        self.a / self.b
    }

    /// Long-run event rate `nu / (1 - A/B)`.
    pub fn stationary_rate(&self) -> f64 {
        self.nu / (1.0 - self.branching_ratio())
    }
}

/// Event timestamps observed on the window `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTimes {
    pub times: Vec<f64>,
    pub horizon: f64,
}

impl EventTimes {
    /// Validates ordering; `horizon` is raised to the last event if smaller.
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self> {
        if let Some(&first) = times.first() {
            ensure(first >= 0.0, "times", || format!("negative timestamp {first}"))?;
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter {
                name: "times",
                reason: format!(
                    "must be strictly increasing; {} then {}",
                    times[i],
                    times[i + 1]
                ),
            });
        }
        let last = times.last().copied().unwrap_or(0.0);
        ensure(horizon.is_finite(), "horizon", || "must be finite".into())?;
        Ok(Self {
            horizon: horizon.max(last),
            times,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn check_events(events: &EventTimes) -> Result<()> {
    if events.is_empty() {
        return Err(Error::InsufficientData("no events".into()));
    }
    Ok(())
}

/// Log-likelihood by the O(n) recursion `R(i) = e^{-B (t_i - t_{i-1})} (1 + R(i-1))`, `R(1) = 0`.
pub fn log_likelihood(params: &HawkesParameters, events: &EventTimes) -> Result<f64> {
    params.validate()?;
    check_events(events)?;
    let HawkesParameters { nu, a, b } = *params;
    let horizon = events.horizon;
    let mut r = 0.0;
    let mut prev = events.times[0];
    let mut sum_log = 0.0;
    let mut compensator = 0.0;
    for (i, &t) in events.times.iter().enumerate() {
        if i > 0 {
            r = (-b * (t - prev)).exp() * (1.0 + r);
            prev = t;
        }
        let lambda = nu + a * r;
        if !(lambda > 0.0) {
            return Err(Error::Numeric(format!("intensity {lambda} at event {i}")));
        }
        sum_log += lambda.ln();
        compensator += (-b * (horizon - t)).exp() - 1.0;
    }
    Ok(sum_log - nu * horizon + a / b * compensator)
}

/// Log-likelihood by direct O(n^2) summation of the kernel.
pub fn log_likelihood_direct(params: &HawkesParameters, events: &EventTimes) -> Result<f64> {
    params.validate()?;
    check_events(events)?;
    let HawkesParameters { nu, a, b } = *params;
    let t = &events.times;
    let mut sum_log = 0.0;
    for i in 0..t.len() {
        let excitation: f64 = t[..i].iter().map(|&tj| (-b * (t[i] - tj)).exp()).sum();
        sum_log += (nu + a * excitation).ln();
    }
    let compensator: f64 = t
        .iter()
        .map(|&ti| (-b * (events.horizon - ti)).exp() - 1.0)
        .sum();
    Ok(sum_log - nu * events.horizon + a / b * compensator)
}

/// Log-likelihood and its gradient with respect to `(nu, A, B)`.
pub fn log_likelihood_with_gradient(
    params: &HawkesParameters,
    events: &EventTimes,
) -> Result<(f64, [f64; 3])> {
    params.validate()?;
    check_events(events)?;
    let HawkesParameters { nu, a, b } = *params;
    let horizon = events.horizon;
    let (mut r, mut dr) = (0.0, 0.0);
    let mut prev = events.times[0];
    let (mut value, mut g_nu, mut g_a, mut g_b) = (0.0, 0.0, 0.0, 0.0);
    let mut comp = 0.0;
    let mut comp_db = 0.0;
    for (i, &t) in events.times.iter().enumerate() {
        if i > 0 {
            let dt = t - prev;
            let e = (-b * dt).exp();
            dr = e * (dr - dt * (1.0 + r));
            r = e * (1.0 + r);
            prev = t;
        }
        let lambda = nu + a * r;
        if !(lambda > 0.0) {
            return Err(Error::Numeric(format!("intensity {lambda} at event {i}")));
        }
        value += lambda.ln();
        g_nu += 1.0 / lambda;
        g_a += r / lambda;
        g_b += a * dr / lambda;
        let tau = horizon - t;
        let e = (-b * tau).exp();
        comp += e - 1.0;
        comp_db += -tau * e;
    }
    value += -nu * horizon + a / b * comp;
    g_nu -= horizon;
    g_a += comp / b;
    g_b += -a / (b * b) * comp + a / b * comp_db;
    Ok((value, [g_nu, g_a, g_b]))
}

/// Analytic gradient of [`log_likelihood`] with respect to `(nu, A, B)`.
pub fn gradient(params: &HawkesParameters, events: &EventTimes) -> Result<[f64; 3]> {
    log_likelihood_with_gradient(params, events).map(|(_, g)| g)
}

/// An event of a simulated stream, tagged when its immigrant came from the
/// exogenous rate rather than from `nu` or excitation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggedEvent {
    pub time: f64,
    pub exogenous: bool,
}

/// Ogata thinning with intensity `nu + extra(t) + excitation`.
///
/// `extra` must be bounded by `extra_max` on `[0, horizon]`; events driven by
/// it are tagged and excite the process like any other event.
pub fn simulate_with_exogenous<R: Rng + ?Sized>(
    params: &HawkesParameters,
    extra: &dyn Fn(f64) -> f64,
    extra_max: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<Vec<TaggedEvent>> {
    params.validate()?;
    ensure(horizon.is_finite() && horizon > 0.0, "horizon", || {
        format!("must be positive, got {horizon}")
    })?;
    ensure(extra_max.is_finite() && extra_max >= 0.0, "extra_max", || {
        format!("must be nonnegative, got {extra_max}")
    })?;
    let HawkesParameters { nu, a, b } = *params;
    let mut out = Vec::new();
    let mut t = 0.0;
    // Excitation sum evaluated at `t`.
    let mut excitation = 0.0;
    loop {
        let bound = nu + extra_max + excitation;
        let wait = Exp::new(bound)
            .map_err(|e| Error::Numeric(format!("thinning bound {bound}: {e}")))?
            .sample(rng);
        excitation *= (-b * wait).exp();
        t += wait;
        if t > horizon {
            break;
        }
        let ex = extra(t).clamp(0.0, extra_max);
        let u: f64 = rng.random::<f64>() * bound;
        if u < nu + ex + excitation {
            out.push(TaggedEvent {
                time: t,
                exogenous: u >= nu + excitation && u < nu + excitation + ex,
            });
            excitation += a;
        }
    }
    Ok(out)
}

/// Simulates a stationary-parameter Hawkes stream on `[0, horizon]`.
pub fn simulate(params: &HawkesParameters, horizon: f64, seed: u64) -> Result<EventTimes> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with_rng(params, horizon, &mut rng)
}

pub fn simulate_with_rng<R: Rng + ?Sized>(
    params: &HawkesParameters,
    horizon: f64,
    rng: &mut R,
) -> Result<EventTimes> {
    let events = simulate_with_exogenous(params, &|_| 0.0, 0.0, horizon, rng)?;
    EventTimes::new(events.into_iter().map(|e| e.time).collect(), horizon)
}

/// Estimation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub min_events: usize,
    /// Stopping tolerance on the sup-norm of the per-event gradient.
    pub gradient_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            min_events: 100,
            gradient_tolerance: 1e-8,
        }
    }
}

/// Maximum-likelihood estimate with a convergence report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HawkesFit {
    pub params: HawkesParameters,
    pub log_likelihood: f64,
    /// Sup-norm of the per-event gradient in the optimizer's coordinates.
    pub gradient_norm: f64,
    pub iterations: usize,
    /// The branching ratio sits at the stationarity bound.
    pub bound_active: bool,
    pub n_events: usize,
}

// Optimizer coordinates: (ln nu, logit(r / MAX_BRANCHING), ln B), with A = r B.
fn to_params(theta: &[f64; 3]) -> HawkesParameters {
    let nu = theta[0].exp();
    let b = theta[2].exp();
    let s = 1.0 / (1.0 + (-theta[1]).exp());
    HawkesParameters {
        nu,
        a: MAX_BRANCHING * s * b,
        b,
    }
}

fn to_theta(p: &HawkesParameters) -> [f64; 3] {
    let s = (p.branching_ratio() / MAX_BRANCHING).clamp(1e-12, 1.0 - 1e-12);
    [p.nu.ln(), (s / (1.0 - s)).ln(), p.b.ln()]
}

/// Negative mean log-likelihood and its gradient in optimizer coordinates.
fn objective(theta: &[f64; 3], events: &EventTimes) -> Option<(f64, [f64; 3])> {
    if theta.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let p = to_params(theta);
    if !(p.nu > 0.0 && p.b > 0.0 && p.nu.is_finite() && p.b.is_finite()) {
        return None;
    }
    let (l, g) = log_likelihood_with_gradient(&p, events).ok()?;
    if !l.is_finite() {
        return None;
    }
    let n = events.len() as f64;
    let s = 1.0 / (1.0 + (-theta[1]).exp());
    let d_nu = g[0] * p.nu;
    let d_logit = g[1] * p.b * MAX_BRANCHING * s * (1.0 - s);
    let d_log_b = g[1] * p.a + g[2] * p.b;
    Some((-l / n, [-d_nu / n, -d_logit / n, -d_log_b / n]))
}

struct Minimum {
    theta: [f64; 3],
    value: f64,
    grad: [f64; 3],
    iterations: usize,
    converged: bool,
}

fn sup_norm(v: &[f64; 3]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// BFGS with backtracking Armijo line search.
fn bfgs(start: [f64; 3], events: &EventTimes, opts: &FitOptions) -> Option<Minimum> {
    let (mut f, mut g) = objective(&start, events)?;
    let mut x = start;
    let mut h = [[0.0; 3]; 3];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut stalled = 0;
    for iter in 0..opts.max_iterations {
        if sup_norm(&g) < opts.gradient_tolerance {
            return Some(Minimum {
                theta: x,
                value: f,
                grad: g,
                iterations: iter,
                converged: true,
            });
        }
        let mut d = [0.0; 3];
        for i in 0..3 {
            d[i] = -(0..3).map(|j| h[i][j] * g[j]).sum::<f64>();
        }
        let mut slope = dot(&d, &g);
        if slope >= 0.0 {
            // Reset to steepest descent.
            h = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            d = [-g[0], -g[1], -g[2]];
            slope = dot(&d, &g);
        }
        // Cap the step at one unit in log space.
        let len = sup_norm(&d);
        let mut step = if len > 1.0 { 1.0 / len } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial = [x[0] + step * d[0], x[1] + step * d[1], x[2] + step * d[2]];
            if let Some((ft, gt)) = objective(&trial, events) {
                if ft <= f + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            return Some(Minimum {
                theta: x,
                value: f,
                grad: g,
                iterations: iter,
                converged: false,
            });
        };
        let s = [xn[0] - x[0], xn[1] - x[1], xn[2] - x[2]];
        let y = [gn[0] - g[0], gn[1] - g[1], gn[2] - g[2]];
        let sy = dot(&s, &y);
        if sy > 1e-16 {
            let rho = 1.0 / sy;
            let mut hy = [0.0; 3];
            for i in 0..3 {
                hy[i] = (0..3).map(|j| h[i][j] * y[j]).sum();
            }
            let yhy = dot(&y, &hy);
            for i in 0..3 {
                for j in 0..3 {
                    h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        stalled = if (f - fn_).abs() <= 1e-15 * f.abs().max(1.0) {
            stalled + 1
        } else {
            0
        };
        x = xn;
        f = fn_;
        g = gn;
        if stalled >= 3 {
            return Some(Minimum {
                theta: x,
                value: f,
                grad: g,
                iterations: iter + 1,
                converged: sup_norm(&g) < 1e3 * opts.gradient_tolerance,
            });
        }
    }
    Some(Minimum {
        theta: x,
        value: f,
        grad: g,
        iterations: opts.max_iterations,
        converged: sup_norm(&g) < opts.gradient_tolerance,
    })
}

fn initial_points(events: &EventTimes) -> Vec<HawkesParameters> {
    let t = &events.times;
    let mean_rate = t.len() as f64 / events.horizon;
    let mut gaps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let q1 = gaps[gaps.len() / 4].max(1e-9);
    let b_hat = 1.0 / q1;
    [
        (0.5, b_hat),
        (0.2, b_hat),
        (0.8, b_hat),
        (0.5, b_hat / 5.0),
        (0.5, 5.0 * b_hat),
    ]
    .iter()
    .map(|&(r, b)| HawkesParameters {
        nu: mean_rate * (1.0 - r),
        a: r * b,
        b,
    })
    .collect()
}

/// Maximum-likelihood fit over `(nu, A, B)` subject to `A/B <= MAX_BRANCHING`.
///
/// Runs BFGS from `init` (if given) and five heuristic starts and keeps the
/// best converged optimum.
pub fn fit_mle(
    events: &EventTimes,
    init: Option<HawkesParameters>,
    opts: &FitOptions,
) -> Result<HawkesFit> {
    if events.len() < opts.min_events.max(2) {
        return Err(Error::InsufficientData(format!(
            "{} events, need at least {}",
            events.len(),
            opts.min_events.max(2)
        )));
    }
    let gaps: Vec<f64> = events.times.windows(2).map(|w| w[1] - w[0]).collect();
    let (lo, hi) = gaps
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &g| (lo.min(g), hi.max(g)));
    if hi - lo <= 1e-12 * hi {
        return Err(Error::Degenerate("all inter-arrival times are identical".into()));
    }

    let mut starts = Vec::new();
    if let Some(p) = init {
        p.validate()?;
        starts.push(p);
    }
    starts.extend(initial_points(events));

    let mut best: Option<Minimum> = None;
    let mut best_any: Option<Minimum> = None;
    for start in &starts {
        let Some(m) = bfgs(to_theta(start), events, opts) else {
            continue;
        };
        log::debug!(
            "hawkes start {:?}: value {} after {} iterations (converged {})",
            start,
            m.value,
            m.iterations,
            m.converged
        );
        let better = |cur: &Option<Minimum>| cur.as_ref().is_none_or(|c| m.value < c.value);
        if m.converged && better(&best) {
            best = Some(m);
        } else if !m.converged && better(&best_any) {
            best_any = Some(m);
        }
    }
    let Some(m) = best else {
        let (iterations, gradient_norm) = best_any
            .map(|m| (m.iterations, sup_norm(&m.grad)))
            .unwrap_or((0, f64::NAN));
        return Err(Error::NonConvergence {
            iterations,
            gradient_norm,
        });
    };
    let params = to_params(&m.theta);
    Ok(HawkesFit {
        params,
        log_likelihood: -m.value * events.len() as f64,
        gradient_norm: sup_norm(&m.grad),
        iterations: m.iterations,
        bound_active: params.branching_ratio() > MAX_BRANCHING * (1.0 - 1e-4),
        n_events: events.len(),
    })
}

/// `rho = (1 - A/B) / (T/2)`.
pub fn resilience_from_branching(params: &HawkesParameters, horizon: f64) -> Result<f64> {
    resilience_from_ratio(params.branching_ratio(), horizon)
}

/// `rho = (1 - r) / (T/2)` for branching ratio `r`.
pub fn resilience_from_ratio(ratio: f64, horizon: f64) -> Result<f64> {
    ensure(horizon.is_finite() && horizon > 0.0, "horizon", || {
        format!("must be positive, got {horizon}")
    })?;
    if !(ratio < 1.0) {
        return Err(Error::NonStationary(ratio));
    }
    ensure(ratio >= 0.0, "branching ratio", || {
        format!("must be nonnegative, got {ratio}")
    })?;
    Ok((1.0 - ratio) / (0.5 * horizon))
}

/// Expected first-generation children of an order at `t_i` before `T`:
/// `(A/B)(1 - e^{-B (T - t_i)})`.
pub fn child_order_expectation(params: &HawkesParameters, t_i: f64, horizon: f64) -> Result<f64> {
    ensure((0.0..=horizon).contains(&t_i), "t_i", || {
        format!("{t_i} outside [0, {horizon}]")
    })?;
    Ok(params.branching_ratio() * (1.0 - (-params.b * (horizon - t_i)).exp()))
}

/// First-generation children of a TWAP program of `x` orders:
/// `x (A/B)(1 - (1 - e^{-BT}) / (BT))`.
pub fn twap_child_aggregate(params: &HawkesParameters, x: f64, horizon: f64) -> f64 {
    let bt = params.b * horizon;
    x * params.branching_ratio() * (1.0 - (-(-bt).exp_m1()) / bt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::simpson;
    use crate::units::half_life_days;

    fn intc() -> HawkesParameters {
        HawkesParameters::new(0.196, 8.647, 10.829).unwrap()
    }

    #[test]
    fn poisson_likelihood() {
        let p = HawkesParameters::new(0.7, 0.0, 1.0).unwrap();
        let ev = EventTimes::new(vec![0.5, 1.0, 3.0, 4.0], 4.0).unwrap();
        let expected = 4.0 * 0.7f64.ln() - 0.7 * 4.0;
        assert!((log_likelihood(&p, &ev).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn two_event_hand_value() {
        let p = HawkesParameters::new(1.0, 1.0, 2.0).unwrap();
        let ev = EventTimes::new(vec![1.0, 2.0], 2.0).unwrap();
        let e2 = (-2.0f64).exp();
        let expected = 0.0 + (1.0 + e2).ln() - 2.0 + 0.5 * ((e2 - 1.0) + 0.0);
        assert!((log_likelihood(&p, &ev).unwrap() - expected).abs() < 1e-14);
        assert!((log_likelihood_direct(&p, &ev).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn window_end_extends_compensator() {
        let p = HawkesParameters::new(0.5, 0.2, 1.0).unwrap();
        let a = EventTimes::new(vec![1.0, 2.0], 2.0).unwrap();
        let b = EventTimes::new(vec![1.0, 2.0], 5.0).unwrap();
        assert!(log_likelihood(&p, &b).unwrap() < log_likelihood(&p, &a).unwrap());
        // A horizon before the last event is raised to it.
        assert_eq!(EventTimes::new(vec![1.0, 2.0], 1.5).unwrap().horizon, 2.0);
    }

    #[test]
    fn unsorted_times_rejected() {
        assert!(EventTimes::new(vec![1.0, 1.0], 2.0).is_err());
        assert!(EventTimes::new(vec![2.0, 1.0], 2.0).is_err());
    }

    #[test]
    fn recursion_matches_direct_sum() {
        let p = HawkesParameters::new(0.3, 1.2, 2.0).unwrap();
        let ev = simulate(&p, 2_000.0, 7).unwrap();
        assert!(ev.len() > 500);
        let a = log_likelihood(&p, &ev).unwrap();
        let b = log_likelihood_direct(&p, &ev).unwrap();
        assert!((a - b).abs() <= 1e-9 * b.abs());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let truth = HawkesParameters::new(0.3, 1.2, 2.0).unwrap();
        let ev = simulate(&truth, 3_000.0, 11).unwrap();
        for p in [truth, HawkesParameters::new(0.5, 0.4, 3.0).unwrap()] {
            let g = gradient(&p, &ev).unwrap();
            let x = [p.nu, p.a, p.b];
            for i in 0..3 {
                let h = 1e-6 * x[i];
                let mut up = x;
                let mut dn = x;
                up[i] += h;
                dn[i] -= h;
                let f = |v: [f64; 3]| {
                    log_likelihood(&HawkesParameters::new(v[0], v[1], v[2]).unwrap(), &ev).unwrap()
                };
                let fd = (f(up) - f(dn)) / (2.0 * h);
                assert!((g[i] - fd).abs() <= 1e-5 * g[i].abs().max(1.0), "{i}: {} vs {fd}", g[i]);
            }
        }
    }

    #[test]
    fn poisson_simulation_rate() {
        let p = HawkesParameters::new(2.0, 0.0, 1.0).unwrap();
        let n = simulate(&p, 5_000.0, 3).unwrap().len() as f64;
        assert!((n - 10_000.0).abs() < 4.0 * 100.0);
    }

    #[test]
    fn stationary_rate_of_excited_stream() {
        let p = HawkesParameters::new(0.2, 8.0, 10.0).unwrap();
        let n = simulate(&p, 19_800.0, 5).unwrap().len() as f64;
        let expected = p.stationary_rate() * 19_800.0;
        assert!((n / expected - 1.0).abs() < 0.1, "{n} vs {expected}");
    }

    #[test]
    fn simulation_is_deterministic() {
        let p = intc();
        assert_eq!(simulate(&p, 500.0, 9).unwrap(), simulate(&p, 500.0, 9).unwrap());
    }

    #[test]
    fn exogenous_events_are_tagged() {
        let p = HawkesParameters::new(0.1, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ev = simulate_with_exogenous(&p, &|_| 0.9, 0.9, 10_000.0, &mut rng).unwrap();
        let exo = ev.iter().filter(|e| e.exogenous).count() as f64;
        let frac = exo / ev.len() as f64;
        assert!((frac - 0.9).abs() < 0.02);
    }

    #[test]
    fn mle_recovers_parameters() {
        let truth = HawkesParameters::new(0.2, 8.6, 10.8).unwrap();
        let ev = simulate(&truth, 20_000.0, 21).unwrap();
        let fit = fit_mle(&ev, None, &FitOptions::default()).unwrap();
        let p = fit.params;
        for (est, tr) in [(p.nu, truth.nu), (p.a, truth.a), (p.b, truth.b)] {
            assert!((est / tr - 1.0).abs() < 0.1, "{p:?}");
        }
        assert!(fit.log_likelihood >= log_likelihood(&truth, &ev).unwrap());
        assert!(!fit.bound_active);
    }

    #[test]
    fn mle_on_poisson_data() {
        let truth = HawkesParameters::new(1.0, 0.0, 1.0).unwrap();
        let ev = simulate(&truth, 5_000.0, 4).unwrap();
        let fit = fit_mle(&ev, None, &FitOptions::default()).unwrap();
        assert!(fit.params.branching_ratio() < 0.05, "{:?}", fit.params);
    }

    #[test]
    fn mle_rejects_small_or_degenerate_samples() {
        let few = EventTimes::new((1..50).map(f64::from).collect(), 60.0).unwrap();
        assert!(matches!(
            fit_mle(&few, None, &FitOptions::default()),
            Err(Error::InsufficientData(_))
        ));
        let regular = EventTimes::new((1..500).map(f64::from).collect(), 600.0).unwrap();
        assert!(matches!(
            fit_mle(&regular, None, &FitOptions::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn intc_resilience() {
        let rho = resilience_from_branching(&intc(), 19_800.0).unwrap();
        assert!((rho / 2.035313e-5 - 1.0).abs() < 1e-5);
        let rho_rounded = resilience_from_ratio(0.7985, 19_800.0).unwrap();
        assert!((rho_rounded - 2.035354e-5).abs() < 5e-12);
        assert!((half_life_days(2.035353e-5) - 1.720).abs() < 5e-4);
        let p = HawkesParameters::new(1.0, 0.0, 1.0).unwrap();
        assert_eq!(resilience_from_branching(&p, 100.0).unwrap(), 0.02);
        assert!(matches!(
            resilience_from_ratio(1.0, 100.0),
            Err(Error::NonStationary(_))
        ));
    }

    #[test]
    fn resilience_decreases_with_branching() {
        let rs: Vec<f64> = (0..10)
            .map(|i| resilience_from_ratio(i as f64 / 10.0, 19_800.0).unwrap())
            .collect();
        assert!(rs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn child_expectations() {
        let p = intc();
        assert_eq!(child_order_expectation(&p, 100.0, 100.0).unwrap(), 0.0);
        let sat = child_order_expectation(&p, 0.0, 19_800.0).unwrap();
        assert!((sat - p.branching_ratio()).abs() < 1e-15);
        assert!(child_order_expectation(&p, 200.0, 100.0).is_err());

        let slow = HawkesParameters::new(0.1, 0.004, 0.005).unwrap();
        let (x, tt) = (1_000.0, 600.0);
        let quad = x / tt
            * simpson(
                |t| child_order_expectation(&slow, t, tt).unwrap(),
                0.0,
                tt,
                2_000,
            );
        assert!((twap_child_aggregate(&slow, x, tt) - quad).abs() < 1e-9 * quad);
    }
}
