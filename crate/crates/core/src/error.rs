use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not satisfy an operation's contract.
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    /// A precondition on values (not shapes) was violated.
    #[error("contract violation in {op}: {msg}")]
    Contract { op: &'static str, msg: String },

    /// Malformed or out-of-range user input (edge lists, index sets, ...).
    #[error("invalid input: {0}")]
    Input(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("dataset error: {0}")]
    Data(String),

    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    /// Training produced a non-finite value.
    #[error("numerical abort in {context}: {msg} (lr={lr}, tau={tau:?})")]
    Numerical {
        context: &'static str,
        msg: String,
        lr: f64,
        tau: Option<f64>,
    },

    #[error("oracle check failed: {0}")]
    Oracle(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::Shape {
            op,
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub(crate) fn contract(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Contract { op, msg: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 1,
            Error::Input(_) | Error::Parse { .. } | Error::Data(_) | Error::Io { .. } => 2,
            Error::Numerical { .. } => 3,
            Error::Oracle(_) => 4,
            Error::Shape { .. } | Error::Contract { .. } => 3,
        }
    }
}
