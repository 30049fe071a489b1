//! Crate-wide error type. Errors are split into *validation* failures (bad
//! inputs, bad files) and *numerical* failures (singular matrices, series that
//! do not converge); the CLI maps the two classes to different exit codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A series or iteration failed to reach its target accuracy within budget.
    #[error("accuracy error: {0}")]
    Accuracy(String),

    /// Closed-form requested for a kernel family that has none.
    #[error("unsupported kernel family: {0}")]
    UnsupportedFamily(String),

    /// An LU pivot fell below tolerance while factorizing a complex matrix.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// An implicit solver or root-finder did not converge.
    #[error("non-convergence: {0}")]
    NonConvergence(String),

    /// A price lies outside its arbitrage bounds, so no implied vol exists.
    #[error("bounds violation: {0}")]
    Bounds(String),

    /// Requested maturity beyond the last curve pillar.
    #[error("extrapolation beyond last pillar: {0}")]
    Extrapolation(String),

    #[error("{file}:{line}:{column}: {reason}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        reason: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// `true` for input/validation problems (CLI exit code 1), `false` for
    /// numerical failures (CLI exit code 2).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::UnsupportedFamily(_)
                | Error::Extrapolation(_)
                | Error::Parse { .. }
                | Error::Config(_)
                | Error::Io(_)
                | Error::Bounds(_)
        )
    }
}
