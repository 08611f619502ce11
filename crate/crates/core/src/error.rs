use thiserror::Error;

/// Errors produced by model construction, fitting, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid SCM specification: {0}")]
    InvalidSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("group a={0} is empty")]
    EmptyGroup(u8),

    #[error("record is missing hidden field `{0}` required here")]
    MissingHidden(&'static str),

    #[error("predictor input `{0}` required by the feature map is missing")]
    MissingAux(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("{0}")]
    Unsupported(String),

    #[error("CSV parse error at line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("golden-section bracket exhausted")]
    BracketExhausted,
}

pub type Result<T> = std::result::Result<T, Error>;
