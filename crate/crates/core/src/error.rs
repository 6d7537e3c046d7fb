//! Error types shared by the simulation and analysis modules.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value is out of its domain (non-finite strain, D <= 0, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Model or machine parameters violate their invariants.
    #[error("config error: {0}")]
    Config(String),

    /// A profile cannot be executed on the configured machine.
    #[error("profile error: {0}")]
    Profile(String),

    #[error("solver did not converge after {iterations} iterations (last residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("analysis error: {0}")]
    Analysis(String),

    /// Wraps a failure raised while executing a profile sample.
    #[error("at t = {time} s: {source}")]
    AtTime {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    /// Config file problems, reported with the offending key and line.
    #[error("{0}")]
    Parse(String),

    #[error("{path}:{line}: {message}")]
    TraceFormat { path: String, line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Strips `AtTime` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_solver(&self) -> bool {
        matches!(self.root(), Error::Solver { .. })
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
