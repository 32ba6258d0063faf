use thiserror::Error;

/// Errors raised by the library. Variants are grouped by the subsystem that
/// produces them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // domain
    #[error("invalid candidate space: {0}")]
    InvalidSpace(String),
    #[error("invalid candidate: {0}")]
    InvalidCandidate(String),
    #[error("invalid target for feature `{feature}`: {reason}")]
    InvalidTarget { feature: String, reason: String },
    #[error("representation profile of an empty committee is undefined")]
    EmptyCommittee,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    // distribution
    #[error("malformed marginal for feature {feature}: {reason}")]
    BadMarginal { feature: usize, reason: String },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("no samples observed yet")]
    NoSamples,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    // lp / cmdp
    #[error("simplex could not certify a status: {0}")]
    NumericalFailure(String),
    #[error("distribution has a zero-probability cell at flat index {0}")]
    NotStrictlyPositive(usize),

    // policies / simulator
    #[error("committee already holds {0} members")]
    CommitteeFull(usize),
    #[error("policy has zero gain under the candidate distribution")]
    ZeroGain,

    // io
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Parse(err.to_string())
    }
}
