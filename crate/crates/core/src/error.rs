//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A stratum (or an unstratified sample) is too small to estimate from.
    #[error("insufficient data in stratum {stratum}: {kind} sample has {have} points, need at least {minimum}")]
    InsufficientData {
        stratum: usize,
        kind: SampleKind,
        have: usize,
        minimum: usize,
    },

    /// Malformed or invalid input data (non-finite values, bad CSV, etc).
    #[error("data error: {0}")]
    Data(String),

    /// Invalid run configuration; the message names the offending field.
    #[error("configuration error: {0}")]
    Config(String),

    /// The requested loss does not support the requested operation.
    #[error("capability error: {0}")]
    Capability(String),

    /// A sampling budget cannot be split across strata under the constraints.
    #[error("infeasible allocation: {0}")]
    Infeasible(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Labeled,
    Unlabeled,
}

impl std::fmt::Display for SampleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SampleKind::Labeled => f.write_str("labeled"),
            SampleKind::Unlabeled => f.write_str("unlabeled"),
        }
    }
}

impl Error {
    /// Process exit code used by the command-line driver.
    ///
    /// 2: usage or configuration, 3: data, 4: numerical or infeasibility.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Capability(_) => 2,
            Error::Data(_) | Error::InsufficientData { .. } | Error::Io(_) => 3,
            Error::Domain(_) | Error::Infeasible(_) => 4,
        }
    }
}
