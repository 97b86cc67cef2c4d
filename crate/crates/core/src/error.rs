//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by kernel algebra, training stages, and the CLI layer.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violated a precondition (dimension mismatch,
    /// nonpositive weight, non-SPD covariance, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Gram factorization failed even after jitter escalation.
    #[error("singular Gram matrix: factorization failed at jitter {jitter:.3e}")]
    SingularGram { jitter: f64 },

    /// TD shrinkage factor left the stable region (`alpha * lambda >= 1`).
    #[error("divergent shrinkage: alpha*lambda = {product} >= 1")]
    DivergentShrinkage { product: f64 },

    /// A numeric routine failed to converge or produced non-finite values.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An operation was called in a state where it is undefined
    /// (e.g. SHAP imputation with an empty embedding buffer).
    #[error("state error: {0}")]
    State(String),

    /// Run configuration rejected during validation.
    #[error("config error: {0}")]
    Config(String),

    /// Missing or malformed run artifacts (records, traces, checkpoints).
    #[error("data error: {0}")]
    Data(String),

    /// A training epoch aborted; `stage` names the pipeline stage that failed.
    #[error("epoch stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wrap an error with the name of the epoch stage it occurred in.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code consumed by the CLI front end:
    /// 2 usage, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => 2,
            Error::Data(_) | Error::State(_) | Error::Io(_) | Error::Json(_) => 3,
            Error::SingularGram { .. }
            | Error::DivergentShrinkage { .. }
            | Error::Numeric(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
