use thiserror::Error;

/// Errors raised across the overlap-density toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mixture spec: {0}")]
    InvalidSpec(String),

    #[error("empty dataset: requested region counts sum to zero")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("too few points for change-point detection: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("no change point: all {0} scores are equal")]
    NoChangePoint(usize),

    #[error("detection degenerate: {0}")]
    DetectionDegenerate(String),

    #[error("source {0} has not been pulled yet")]
    UnpulledSource(usize),

    #[error("finite source {0} exhausted")]
    SourceExhausted(usize),

    #[error("conditional probability undefined: P({0}) = 0")]
    UndefinedConditional(String),

    #[error("enumeration cap exceeded: {size} candidate points > cap {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error("out of regime: {0}")]
    OutOfRegime(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("refusing to aggregate runs with different configs")]
    MixedConfigs,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
