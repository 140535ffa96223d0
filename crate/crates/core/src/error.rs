use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse exact value from {0:?}")]
pub struct ParseExactError(pub String);

#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {0}")]
    Index(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("enumeration budget exceeded: {what} needs more than {budget} nodes")]
    Budget { what: &'static str, budget: u64 },
    #[error("construction precondition violated: {0}")]
    Construction(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("cannot decode action profile: {0}")]
    Decode(String),
    #[error("policy is not serializable: {0}")]
    NotSerializable(String),
    #[error("malformed document: {0}")]
    Format(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Parse(#[from] ParseExactError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
