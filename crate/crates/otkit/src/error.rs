use thiserror::Error;

/// Errors reported by solvers and constructors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid transport plan: {0}")]
    InvalidPlan(String),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("linear system is singular beyond the constant direction: {0}")]
    Singular(String),

    #[error("infeasible decrement: {0}")]
    Infeasible(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error{}: {source}", context.as_ref().map(|c| format!(" in {c}")).unwrap_or_default())]
    Json {
        #[source]
        source: serde_json::Error,
        context: Option<String>,
    },
}

impl From<serde_json::Error> for Error {
    fn from(source: serde_json::Error) -> Self {
        Error::Json { source, context: None }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
