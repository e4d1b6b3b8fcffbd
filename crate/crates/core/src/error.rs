use thiserror::Error;

/// Errors raised across the calibration and strategy pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time {t} outside the trading horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },

    #[error("degenerate parameters: {0}")]
    Degenerate(String),

    #[error("liquidation constraint violated: schedule sells {sold} of {x0} shares")]
    ConstraintViolation { sold: f64, x0: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("Hawkes process is not stationary: branching ratio {0} >= 1")]
    NonStationary(f64),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence { iterations: usize, gradient_norm: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("outcomes are perfectly separated by the regressor")]
    Separation,

    #[error("rank-deficient regression: {0}")]
    RankDeficient(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: timestamp {timestamp} precedes previous event at {previous}")]
    OutOfOrder {
        line: usize,
        timestamp: f64,
        previous: f64,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, name: &'static str, reason: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: reason(),
        })
    }
}
