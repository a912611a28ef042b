use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("budget exceeded: {what} = {requested} > limit {limit}")]
    BudgetExceeded {
        what: String,
        requested: u128,
        limit: u128,
    },

    #[error("operator is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("rejection sampling gave up after {0} rejects")]
    RejectBudget(u64),

    #[error("empty conditioned set: {0}")]
    EmptySet(String),

    #[error("representation mismatch: {0}")]
    Representation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    pub(crate) fn budget(what: impl Into<String>, requested: u128, limit: u128) -> Self {
        LabError::BudgetExceeded {
            what: what.into(),
            requested,
            limit,
        }
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}
