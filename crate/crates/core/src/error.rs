use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid array configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The Poisson series needs more terms than allowed. This happens when
    /// the rate-time product of one interval is too large; use a smaller
    /// step size.
    #[error(
        "uniformization needs {needed} terms for rate*time {rate_time:.6e}, above the ceiling of {ceiling}; reduce the step size"
    )]
    TermCeiling {
        needed: usize,
        ceiling: usize,
        rate_time: f64,
    },
}
