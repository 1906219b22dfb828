use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The parameter lies on or above the phi_e curve, where the map is not expanding.
    #[error("parameter (phi = {phi}, t = {t}) is not below the phi_e curve (phi_e = {phi_e}); {what} requires an expanding map")]
    NotExpanding {
        phi: f64,
        t: f64,
        phi_e: f64,
        what: &'static str,
    },

    /// No zero-free arc exists below the critical temperature.
    #[error("t = {t} is below t_c = {t_c}: the support is the full circle and there is no gap")]
    NoGap { t: f64, t_c: f64 },

    #[error("level {level} is too deep for branching number {k}: {reason}")]
    LevelTooDeep { k: u32, level: u32, reason: String },

    #[error("size guard: {0}")]
    SizeGuard(String),

    #[error("coefficient overflow at level {level}: {reason}")]
    Overflow { level: u32, reason: String },

    #[error("root finder did not converge: {0}")]
    NoConvergence(String),

    #[error("root {index} is off the unit circle: ||z| - 1| = {deviation:e}")]
    OffCircle { index: usize, deviation: f64 },

    #[error("evaluation at a zero of the partition function: {0}")]
    AtZero(String),

    #[error("loss of significance: {0}")]
    Significance(String),

    #[error("internal inconsistency: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
