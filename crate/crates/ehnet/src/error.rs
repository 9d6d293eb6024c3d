use thiserror::Error;

/// Errors produced by the analysis and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Joint harvest probabilities do not sum to one.
    #[error("harvest probabilities sum to {sum}, expected 1")]
    NonStochastic { sum: f64 },

    /// A probability field lies outside [0, 1].
    #[error("{field} = {value} is outside [0, 1]")]
    OutOfRange { field: &'static str, value: f64 },

    /// An input that must be strictly positive is not.
    #[error("{field} = {value} must be positive")]
    NonPositiveInput { field: &'static str, value: f64 },

    /// A network configuration violates a structural constraint.
    #[error("invalid network configuration: {reason}")]
    InvalidConfig { reason: String },

    /// A battery state violates the slot-boundary invariant.
    #[error(
        "battery state ({b1}, {b2}) is not a valid slot-boundary state for \
         thresholds ({gamma1}, {gamma2})"
    )]
    InvalidState {
        b1: u32,
        b2: u32,
        gamma1: u32,
        gamma2: u32,
    },

    /// The stationary solver did not reach its residual target.
    #[error(
        "stationary solve stopped at residual {achieved:e} after {iterations} \
         iterations (target {target:e})"
    )]
    NoConvergence {
        target: f64,
        achieved: f64,
        iterations: u64,
    },

    /// A distribution and a configuration describe different state grids.
    #[error("distribution covers {actual} states but the configuration has {expected}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A formula was evaluated outside its stated domain of validity.
    #[error("precondition violated: {0}")]
    PreconditionViolated(&'static str),

    /// Integer overflow in exact threshold arithmetic.
    #[error("integer overflow computing lcm({a}, {b})")]
    Overflow { a: u64, b: u64 },

    /// An asymptotic approximation was requested outside its guard region.
    #[error("approximation domain violated: {0}")]
    ApproximationDomain(String),

    /// Equal capacities leave the closed-form threshold assignment ambiguous.
    #[error("equal battery capacities make the closed form ambiguous; fall back to exhaustive search")]
    AmbiguousCase,
}

pub type Result<T> = std::result::Result<T, Error>;
