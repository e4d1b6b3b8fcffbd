//! Market-impact calibration from order-book event streams and closed-form
//! optimal liquidation under transient impact.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cost;
pub mod error;
pub mod hawkes;
pub mod lob;
pub mod quadrature;
pub mod report;
pub mod simulator;
pub mod strategy;
pub mod units;
pub mod verify;

pub use calibration::{
    estimate_eta, fit_logistic, permanent_impact, EtaFit, GammaRule, ImbalanceSample, LambdaVariant,
    LevelStats, LogisticFit, MidMove,
};
pub use cost::{execution_cost, temporary_impact_path, CostBreakdown, ImpactPath};
pub use error::{Error, Result};
pub use hawkes::{fit_mle, EventTimes, FitOptions, HawkesFit, HawkesParameters};
pub use strategy::{
    optimal_path, optimal_rate, ImpactParameters, LiquidationProblem, OptimalStrategy,
    RateFn, RateProfile, ScheduleKind, ScheduleRow, TradingSchedule,
};
pub use lob::{replay, BookEvent, DerivedStreams, ReplayConfig};
pub use simulator::{generate, inject_strategy, GeneratedStream, MarketSpec};
pub use units::PriceUnit;
pub use verify::{ode_characterization_check, stationarity_residual, OdeCheck};
