//! Crate-wide error type.

/// Errors produced anywhere in the retargeting pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument was violated (dimension mismatch,
    /// out-of-range value, unknown name, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Geometric input too degenerate to process (zero-variance point set,
    /// coincident eye corners, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A constrained sampler could not produce a valid draw.
    #[error("generation failure: {0}")]
    GenerationFailure(String),

    /// A non-finite value appeared during network evaluation or training.
    #[error("numeric failure in tensor `{tensor}`: {msg}")]
    NumericFailure { tensor: String, msg: String },

    /// Landmarks handed to the inference entry point are not in the aligned
    /// 128x128 frame.
    #[error("input not aligned: {0}")]
    InputNotAligned(String),

    /// Blink adaptation was queried before enough observations accumulated.
    #[error("not warmed up: {observed} observations, {required} required")]
    NotWarmedUp { observed: usize, required: usize },

    /// Error while processing one sample of a dataset.
    #[error("sample {index}: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Error attributed to one stage of the per-frame pipeline.
    #[error("stage {stage}: {source}")]
    AtStage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateInput(msg.into())
    }

    pub fn at_sample(self, index: usize) -> Self {
        Error::AtSample {
            index,
            source: Box::new(self),
        }
    }

    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::AtStage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
