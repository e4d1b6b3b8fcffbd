//! Unit conventions.
//!
//! Time is measured in seconds and one trading day is the 10:00-15:30 window
//! of 19800 seconds. Prices are carried in one of three units: exchange ticks,
//! basis points of a reference price, or dollars. All conversions go through
//! [`PriceUnit`] so cost outputs always state which unit they are in.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;
use std::fmt;

/// Seconds in one trading day (10:00 to 15:30).
pub const TRADING_DAY_SECONDS: f64 = 19_800.0;

/// Basis points per unit of relative price.
pub const BPS: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceUnit {
    Ticks { tick_size: f64 },
    BasisPoints,
    Dollars,
}

impl PriceUnit {
    /// Converts a price amount in this unit to a fraction of `reference_price`.
    pub fn to_fraction(self, value: f64, reference_price: f64) -> f64 {
        match self {
            PriceUnit::Ticks { tick_size } => value * tick_size / reference_price,
            PriceUnit::BasisPoints => value / BPS,
            PriceUnit::Dollars => value / reference_price,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PriceUnit::Ticks { .. } => "ticks",
            PriceUnit::BasisPoints => "bps",
            PriceUnit::Dollars => "usd",
        }
    }
}

impl fmt::Display for PriceUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Ticks per share to basis points per share at `price`.
pub fn to_basis_points(value_ticks: f64, tick_size: f64, price: f64) -> f64 {
    value_ticks * tick_size * BPS / price
}

/// Inverse of [`to_basis_points`].
pub fn from_basis_points(value_bps: f64, tick_size: f64, price: f64) -> f64 {
    value_bps * price / (tick_size * BPS)
}

/// Time for transient impact to halve, in seconds.
pub fn half_life_seconds(rho: f64) -> f64 {
    LN_2 / rho
}

pub fn half_life_days(rho: f64) -> f64 {
    half_life_seconds(rho) / TRADING_DAY_SECONDS
}

/// Recovery rate in percent per trading day, `100 ln2 / half-life in days`.
pub fn recovery_pct_per_day(rho: f64) -> f64 {
    100.0 * LN_2 / half_life_days(rho)
}

/// Resilience in 1/seconds from a half-life quoted in trading days.
pub fn rho_from_half_life_days(days: f64) -> f64 {
    LN_2 / (days * TRADING_DAY_SECONDS)
}
