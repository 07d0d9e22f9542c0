use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("invalid monotonicity spec: {0}")]
    InvalidSpec(String),

    #[error("strong pairwise relation contains a cycle through `{0}`")]
    Cycle(String),

    #[error("unknown group `{0}`")]
    UnknownGroup(String),

    #[error("empty grid: {0}")]
    EmptyGrid(String),

    #[error("penalty cannot be evaluated: {0}")]
    Penalty(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged in round {round}, epoch {epoch} (loss = {loss})")]
    Diverged { round: usize, epoch: usize, loss: f64 },

    #[error("data contains NaN or infinite values: {0}")]
    NonFinite(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("discrete domain too large: {comparisons} comparisons exceed the limit of {limit}")]
    DomainTooLarge { comparisons: u64, limit: u64 },

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
