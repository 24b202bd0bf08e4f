use std::path::PathBuf;

/// Errors surfaced by samplers, estimators and the experiment runner.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The caller passed arguments that do not fit the operation's contract
    /// (dimension mismatch, unequal sample counts, missing config fields).
    #[error("usage error: {0}")]
    Usage(String),

    /// A numeric argument lies outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A non-finite value appeared mid-computation.
    #[error("non-finite {quantity} at coordinate {coordinate} (step {step})")]
    NonFinite {
        quantity: &'static str,
        coordinate: usize,
        step: u64,
    },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
