use std::path::PathBuf;

/// Errors raised while loading inputs or running the solvers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("O/D pair `{od}` has no path from `{origin}` to `{destination}`")]
    Unreachable {
        od: String,
        origin: String,
        destination: String,
    },

    #[error("O/D pair `{od}` has more than {cap} simple paths")]
    PathOverflow { od: String, cap: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("negative flow {0}")]
    NegativeFlow(f64),

    #[error("flow is infeasible (max residual {0:e})")]
    Infeasible(f64),

    #[error("network is not homogeneous (capacity asymmetry ranges over [{min}, {max}])")]
    Heterogeneous { min: f64, max: f64 },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
