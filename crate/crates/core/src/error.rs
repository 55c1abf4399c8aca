use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed WAV data: {0}")]
    Decode(String),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("expected sample rate {expected} Hz, got {actual} Hz")]
    RateMismatch { expected: u32, actual: u32 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("training labels contain a single class")]
    DegenerateLabels,
    #[error("cannot stratify into {k} folds: {reason}")]
    InfeasibleStratification { k: usize, reason: String },
    #[error("ROC-AUC is undefined when only one class is present")]
    UndefinedAuc,
    #[error("patient {0} has conflicting labels")]
    LabelConflict(String),
    #[error("audio file not found: {}", .0.display())]
    MissingAudio(PathBuf),
    #[error("unknown label token {0:?} (expected normal or abnormal)")]
    BadLabel(String),
    #[error("manifest contains no rows")]
    ManifestEmpty,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("fold {fold} failed: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("model artifact: {0}")]
    Artifact(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
