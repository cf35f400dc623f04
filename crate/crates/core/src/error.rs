use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("solver diverged; last finite index {last_valid}")]
    Divergence { last_valid: usize },
    #[error("unsupported functional: {0}")]
    UnsupportedFunctional(String),
    #[error("out of domain: {0}")]
    OutOfDomain(String),
    #[error("hamiltonian is unbounded: {0}")]
    UnboundedHamiltonian(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("monte carlo: {failed} of {total} samples diverged")]
    McDivergence { failed: usize, total: usize },
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
