use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical routine failed or produced an inconsistent result.
    #[error("numeric error (dim {dim}): {message}")]
    Numeric { message: String, dim: usize },

    /// A dense allocation would exceed the configured memory budget.
    #[error("resource error: {what} needs {required} bytes but the budget is {available} bytes")]
    Resource {
        what: String,
        required: u64,
        available: u64,
    },

    /// The likelihood is -inf everywhere on the grid.
    #[error("estimation error: {0}")]
    Estimation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(dim: usize, msg: impl Into<String>) -> Self {
        Error::Numeric {
            message: msg.into(),
            dim,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
