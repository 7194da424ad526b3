//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad command-line usage or invalid argument combination.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Malformed or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input file.
    #[error("parse error ({file}:{line}): {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    /// Target sequence that no frame alignment can produce.
    #[error("infeasible alignment: {0}")]
    Infeasible(String),

    /// Corrupt or incompatible checkpoint.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Non-finite values or other numeric breakdown during optimization.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Violated invariant inside the library itself (a bug, not bad input).
    #[error("internal error: {0}")]
    Internal(String),

    #[error("io error while {context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code used by the `hatl-lab` binary: 2 for user input
    /// problems, 3 for numeric breakdown, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::Config(_) | Error::Parse { .. } | Error::Infeasible(_) => {
                2
            }
            Error::Numeric(_) => 3,
            Error::Checkpoint(_) | Error::Io { .. } | Error::Internal(_) => 1,
        }
    }
}
