use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller broke an API contract, e.g. spectra on different grids.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("single-well regime: {0}")]
    SingleWell(String),

    #[error("eigen-solve failed: {reason} (grid points {points}, spacing {spacing:.3e} Wb)")]
    EigenSolve { reason: String, points: usize, spacing: f64 },

    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable class name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Contract(_) => "contract",
            Error::SingleWell(_) => "single_well",
            Error::EigenSolve { .. } => "eigen_solve",
            Error::NonConvergence(_) => "non_convergence",
            Error::Validation(_) => "validation",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit status for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 1,
            Error::Parse { .. } | Error::Config(_) => 2,
            Error::Domain(_) | Error::Contract(_) | Error::Validation(_) | Error::SingleWell(_) => 3,
            Error::NonConvergence(_) | Error::EigenSolve { .. } => 4,
        }
    }
}
