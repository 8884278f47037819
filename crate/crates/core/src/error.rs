use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("not an ultrametric: {count} violating triples (worst slack {worst_slack})")]
    NotUltrametric { count: usize, worst_slack: f64 },

    #[error("concatenation part {index} has diameter {diameter}, which exceeds the joining height {height}")]
    ConcatTooTall {
        index: usize,
        diameter: f64,
        height: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("ambiguous reconstruction: {0}")]
    AmbiguousMatch(String),

    #[error("inconsistent path: {0}")]
    InconsistentPath(String),

    #[error("input is not identifiable: {0}")]
    NotIdentifiable(String),

    #[error("no completion: {0}")]
    NoCompletion(String),

    #[error("multiple completions: {0}")]
    MultipleCompletions(String),

    #[error("search budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("certificate check failed: {0}")]
    Certificate(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
