use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid genome: {0}")]
    InvalidGenome(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("road length {road_length} m is shorter than the lookahead distance {lookahead} m")]
    RoadTooShort { road_length: f64, lookahead: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("no reproduction-eligible parents in a population of {0}")]
    NoEligibleParents(usize),

    #[error("comparison pool holds no genome other than the candidate")]
    EmptyPool,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
