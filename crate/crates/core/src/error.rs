use thiserror::Error;

/// Failure modes shared by every module of the lab.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inputs violate an operation's preconditions.
    #[error("usage error: {0}")]
    Usage(String),
    /// A configured cap (time horizon, support size, population, enumeration budget) was exceeded.
    #[error("resource cap exceeded: {0}")]
    Resource(String),
    /// An internal consistency check failed.
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

pub(crate) fn resource(msg: impl Into<String>) -> Error {
    Error::Resource(msg.into())
}
