use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite behavior state at turn {turn}")]
    NonFiniteState { turn: usize },

    #[error("correlation undefined: zero variance in input series")]
    UndefinedCorrelation,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("series too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("statistics error in {stage}: {reason}")]
    Stats { stage: String, reason: String },

    #[error("invalid sweep data: {0}")]
    Validation(String),

    #[error("unknown figure panel `{0}`")]
    UnknownPanel(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn stats(stage: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Stats {
            stage: stage.into(),
            reason: reason.into(),
        }
    }
}
