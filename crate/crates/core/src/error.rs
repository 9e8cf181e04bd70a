use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training diverged at learning rate {lr:e}, epoch {epoch}: {detail}")]
    Diverged { lr: f64, epoch: usize, detail: String },

    #[error("every learning rate in the sweep diverged")]
    AllRatesDiverged,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("hash mismatch for {path}: evaluation data changed on disk")]
    HashMismatch { path: PathBuf },

    #[error("experiment stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// Tags an error with the experiment stage it came from.
    pub(crate) fn stage(stage: impl Into<String>, source: Error) -> Self {
        Error::Stage { stage: stage.into(), source: Box::new(source) }
    }
}

/// Maps a result into a stage-tagged error for experiment diagnostics.
pub(crate) fn at_stage<T>(stage: impl Into<String>, result: Result<T>) -> Result<T> {
    result.map_err(|e| Error::stage(stage, e))
}
