use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("unknown column `{name}` at header position {column}")]
    UnknownColumn { name: String, column: usize },

    #[error("missing column `{name}` in header")]
    MissingColumn { name: String },

    #[error("row {row}, column `{column}`: unknown level `{value}`")]
    UnknownCategoryLevel {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: {message}")]
    MalformedRow {
        row: usize,
        column: String,
        message: String,
    },

    #[error("row {row}: permanent supportive housing records are excluded from analysis")]
    ExcludedIntervention { row: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("node has no samples")]
    EmptyNode,

    #[error("row has {got} columns, model expects {expected}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("only one class present")]
    SingleClass,

    #[error("need at least {needed} positives and negatives, got {n_pos} and {n_neg}")]
    InsufficientClassCount {
        needed: usize,
        n_pos: usize,
        n_neg: usize,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("input is constant")]
    ConstantInput,

    #[error("observed group is empty")]
    EmptyGroup,

    #[error("observed group ({group}) must be smaller than the population ({population})")]
    GroupTooLarge { group: usize, population: usize },

    #[error("index {index} outside population of size {population}")]
    IndexOutOfRange { index: usize, population: usize },

    #[error("missing score for {0}")]
    MissingScore(String),

    #[error("record `{0}` lacks counterfactual reentry probabilities")]
    MissingCounterfactuals(String),

    #[error("record does not match schema: {0}")]
    SchemaMismatch(String),

    #[error("invalid generator config: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
