use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid cause set: {0}")]
    InvalidCauseSet(String),

    #[error("not a probability vector ({context}): {reason}")]
    NotSimplex { context: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("row {row} has no mass over the active columns")]
    RowDegenerate { row: usize },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    SingularMatrix { condition: f64 },

    #[error("unmapped cause labels: {}", labels.join(", "))]
    UnmappedCause { labels: Vec<String> },

    #[error("every cause would be excluded from calibration")]
    AllCausesExcluded,

    #[error("need at least two calibrated causes, found {active}")]
    TooFewActiveCauses { active: usize },

    #[error("Dirichlet approximation failed for component {component}: zero sample variance")]
    DegenerateRow { component: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing parameter `{0}` in posterior draws")]
    MissingParameter(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
