use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("{source_name}:{line}: {message}")]
    Schema {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("missing required column `{column}` in {source_name}")]
    MissingColumn { source_name: String, column: String },

    #[error("checkpoint field `{field}` mismatch: {message}")]
    Checkpoint { field: String, message: String },

    #[error("non-finite value at timestep {step}: {what}")]
    NonFinite { step: usize, what: String },

    #[error("did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },

    #[error("singular information matrix")]
    Singular,

    #[error("training diverged in fold {fold} at epoch {epoch}: mean loss {loss:e}")]
    Divergence { fold: usize, epoch: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of a numerical procedure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::NoConvergence { .. } | Error::Singular | Error::Divergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
