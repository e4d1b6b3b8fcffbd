//! Estimators for the instantaneous and permanent impact factors and assembly
//! of a complete parameter record.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::strategy::ImpactParameters;
use crate::units::PriceUnit;

/// Stationary flow statistics for one price level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    /// 1 for the best quote.
    pub level: usize,
    /// Limit-order arrival rate, orders per second.
    pub mu_plus: f64,
    /// Cancellation rate per resting order, 1/second.
    pub mu_minus: f64,
    /// Mean submitted size, shares.
    pub mean_size: f64,
    /// Distance from the mid-price, ticks.
    pub offset: f64,
}

impl LevelStats {
    /// Expected queue size `V mu+ / mu-`, or `None` when `mu- = 0`.
    pub fn q(&self) -> Option<f64> {
        (self.mu_minus > 0.0).then(|| self.mean_size * self.mu_plus / self.mu_minus)
    }
}

/// Levels that carry liquidity, their queue sizes and cumulative depth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthProfile {
    pub levels: Vec<usize>,
    pub q: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub offsets: Vec<f64>,
}

/// Orders levels by index and accumulates `Q_i = sum_{j <= i} q_j` over
/// levels with positive liquidity; levels with `mu- = 0` are skipped.
pub fn depth_profile(levels: &[LevelStats]) -> DepthProfile {
    let mut sorted: Vec<&LevelStats> = levels.iter().collect();
    sorted.sort_by_key(|l| l.level);
    let mut out = DepthProfile {
        levels: Vec::new(),
        q: Vec::new(),
        cumulative: Vec::new(),
        offsets: Vec::new(),
    };
    let mut total = 0.0;
    for l in sorted {
        match l.q() {
            Some(q) if q > 0.0 => {
                total += q;
                out.levels.push(l.level);
                out.q.push(q);
                out.cumulative.push(total);
                out.offsets.push(l.offset);
            }
            Some(_) => {}
            None => log::warn!("level {} has no cancellations; excluded", l.level),
        }
    }
    out
}

/// Simple linear regression `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<OlsFit> {
    ensure(x.len() == y.len(), "x", || {
        format!("length {} differs from y length {}", x.len(), y.len())
    })?;
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} points")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0).powi(2) * nf {
        return Err(Error::RankDeficient("regressor is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(OlsFit {
        slope,
        intercept,
        r_squared,
        n,
    })
}

/// Instantaneous impact regression result, in ticks per share.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaFit {
    pub eta: f64,
    /// Fitted half-spread `p0`, ticks.
    pub intercept: f64,
    pub r_squared: f64,
    pub depth: DepthProfile,
}

/// Regresses level offsets on cumulative depth, `O_i = p0 + eta Q_i`.
pub fn estimate_eta(levels: &[LevelStats]) -> Result<EtaFit> {
    let depth = depth_profile(levels);
    if depth.levels.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} levels with positive liquidity, need 3",
            depth.levels.len()
        )));
    }
    let fit = ols(&depth.cumulative, &depth.offsets)?;
    Ok(EtaFit {
        eta: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        depth,
    })
}

/// Direction of a mid-price change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MidMove {
    Down,
    Up,
}

/// Order imbalance at the start of a window whose mid-price changed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceSample {
    pub window: usize,
    /// Sell minus buy market orders.
    pub delta: f64,
    #[serde(rename = "move")]
    pub mid_move: MidMove,
}

impl ImbalanceSample {
    fn down(&self) -> f64 {
        match self.mid_move {
            MidMove::Down => 1.0,
            MidMove::Up => 0.0,
        }
    }
}

/// `1 / (1 + e^{-x})`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Down-move probability model `f(delta) = logistic(B0 + B1 delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogisticFit {
    pub b0: f64,
    pub b1: f64,
    pub se_b0: f64,
    pub se_b1: f64,
    /// `-B0 / B1`.
    pub delta_bar: f64,
    pub n_samples: usize,
    pub log_likelihood: f64,
    pub iterations: usize,
}

impl LogisticFit {
    /// A fit with known coefficients and no sampling information.
    pub fn from_coefficients(b0: f64, b1: f64) -> Self {
        Self {
            b0,
            b1,
            se_b0: f64::NAN,
            se_b1: f64::NAN,
            delta_bar: if b1 != 0.0 { -b0 / b1 } else { f64::NAN },
            n_samples: 0,
            log_likelihood: f64::NAN,
            iterations: 0,
        }
    }

    /// `f(delta)`.
    pub fn probability_down(&self, delta: f64) -> f64 {
        logistic(self.b0 + self.b1 * delta)
    }
}

/// Log-likelihood of `(b0, b1)` on the samples.
pub fn logistic_log_likelihood(b0: f64, b1: f64, samples: &[ImbalanceSample]) -> f64 {
    samples
        .iter()
        .map(|s| {
            let z = b0 + b1 * s.delta;
            s.down() * z - softplus(z)
        })
        .sum()
}

/// Mean score `(1/n) sum (y - p) (1, delta)`.
pub fn logistic_score(b0: f64, b1: f64, samples: &[ImbalanceSample]) -> [f64; 2] {
    let n = samples.len().max(1) as f64;
    samples.iter().fold([0.0, 0.0], |acc, s| {
        let r = s.down() - logistic(b0 + b1 * s.delta);
        [acc[0] + r / n, acc[1] + r * s.delta / n]
    })
}

const IRLS_MAX_ITERATIONS: usize = 100;
const IRLS_TOLERANCE: f64 = 1e-10;
const IRLS_RIDGE: f64 = 1e-8;

/// Maximum-likelihood logistic regression of the down indicator on `delta`
/// by iteratively reweighted least squares.
pub fn fit_logistic(samples: &[ImbalanceSample]) -> Result<LogisticFit> {
    let downs: Vec<f64> = samples
        .iter()
        .filter(|s| s.mid_move == MidMove::Down)
        .map(|s| s.delta)
        .collect();
    let ups: Vec<f64> = samples
        .iter()
        .filter(|s| s.mid_move == MidMove::Up)
        .map(|s| s.delta)
        .collect();
    if downs.is_empty() || ups.is_empty() {
        return Err(Error::InsufficientData(
            "both down and up moves are required".into(),
        ));
    }
    let extent = |v: &[f64]| {
        v.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    };
    let (dlo, dhi) = extent(&downs);
    let (ulo, uhi) = extent(&ups);
    if dlo > uhi || ulo > dhi {
        return Err(Error::Separation);
    }

    let (mut b0, mut b1) = (0.0, 0.0);
    let mut ll = logistic_log_likelihood(b0, b1, samples);
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=IRLS_MAX_ITERATIONS {
        iterations = iter;
        let (mut h00, mut h01, mut h11, mut g0, mut g1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for s in samples {
            let p = logistic(b0 + b1 * s.delta);
            let w = p * (1.0 - p);
            let r = s.down() - p;
            h00 += w;
            h01 += w * s.delta;
            h11 += w * s.delta * s.delta;
            g0 += r;
            g1 += r * s.delta;
        }
        h00 += IRLS_RIDGE * h00.max(1.0);
        h11 += IRLS_RIDGE * h11.max(1.0);
        let det = h00 * h11 - h01 * h01;
        if !(det > 0.0) {
            return Err(Error::Numeric(format!("singular IRLS system (det {det})")));
        }
        b0 += (h11 * g0 - h01 * g1) / det;
        b1 += (h00 * g1 - h01 * g0) / det;
        let next = logistic_log_likelihood(b0, b1, samples);
        let change = (next - ll).abs();
        ll = next;
        if change <= IRLS_TOLERANCE * ll.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        let g = logistic_score(b0, b1, samples);
        return Err(Error::NonConvergence {
            iterations,
            gradient_norm: g[0].abs().max(g[1].abs()),
        });
    }

    // Standard errors from the observed information at the estimate.
    let (mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0);
    for s in samples {
        let p = logistic(b0 + b1 * s.delta);
        let w = p * (1.0 - p);
        h00 += w;
        h01 += w * s.delta;
        h11 += w * s.delta * s.delta;
    }
    let det = h00 * h11 - h01 * h01;
    if !(det > 0.0) {
        return Err(Error::RankDeficient("imbalance is constant".into()));
    }
    let se_b0 = (h11 / det).sqrt();
    let se_b1 = (h00 / det).sqrt();
    if b1.abs() < se_b1 {
        return Err(Error::Degenerate(format!(
            "B1 = {b1} is within one standard error ({se_b1}) of zero"
        )));
    }
    Ok(LogisticFit {
        b0,
        b1,
        se_b0,
        se_b1,
        delta_bar: -b0 / b1,
        n_samples: samples.len(),
        log_likelihood: ll,
        iterations,
    })
}

/// How the down-probability shift of one extra sell order is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaVariant {
    /// `f(delta_bar + 1) - 1/2`.
    #[default]
    Exact,
    /// `f'(delta_bar) = B1 / 4`.
    Tangent,
}

/// Permanent impact per average market order and per share, in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PermanentImpact {
    pub big_lambda: f64,
    pub lambda: f64,
    pub variant: LambdaVariant,
}

/// `Lambda = 2 (1/mu) dp Z`, `lambda = Lambda / L`.
pub fn permanent_impact(
    fit: &LogisticFit,
    z_bar: f64,
    l_bar: f64,
    mu: f64,
    variant: LambdaVariant,
) -> Result<PermanentImpact> {
    ensure(z_bar.is_finite() && z_bar > 0.0, "z_bar", || {
        format!("must be positive, got {z_bar}")
    })?;
    ensure(l_bar.is_finite() && l_bar > 0.0, "l_bar", || {
        format!("must be positive, got {l_bar}")
    })?;
    ensure(mu.is_finite() && mu > 0.0, "mu", || {
        format!("must be positive, got {mu}")
    })?;
    let dp = match variant {
        // B0 + B1 (delta_bar + 1) = B1.
        LambdaVariant::Exact => logistic(fit.b1) - 0.5,
        LambdaVariant::Tangent => 0.25 * fit.b1,
    };
    let big_lambda = 2.0 / mu * dp * z_bar;
    Ok(PermanentImpact {
        big_lambda,
        lambda: big_lambda / l_bar,
        variant,
    })
}

/// How the temporary impact factor is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRule {
    /// `gamma = lambda / mu`.
    FromLambda { mu: f64 },
    Fixed(f64),
}

impl Default for GammaRule {
    fn default() -> Self {
        GammaRule::FromLambda { mu: 1.0 }
    }
}

/// Builds the impact record in basis points per share.
pub fn assemble_parameters(
    eta_bps: f64,
    lambda_bps: f64,
    rho: f64,
    gamma_rule: GammaRule,
) -> Result<ImpactParameters> {
    let gamma = match gamma_rule {
        GammaRule::FromLambda { mu } => {
            ensure(mu.is_finite() && mu > 0.0, "mu", || {
                format!("must be positive, got {mu}")
            })?;
            lambda_bps / mu
        }
        GammaRule::Fixed(g) => g,
    };
    Ok(ImpactParameters::new(eta_bps, gamma, lambda_bps, rho)?.with_unit(PriceUnit::BasisPoints))
}
