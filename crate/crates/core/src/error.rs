use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data in {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("unknown condition `{given}`; valid tags: {valid}")]
    UnknownCondition { given: String, valid: String },

    #[error("no projectable points")]
    NoProjectablePoints,

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("triplet loss undefined: {0}")]
    TripletUndefined(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite loss at iteration {iter} (batch {batch_id}): {detail}")]
    NonFinite {
        iter: usize,
        batch_id: usize,
        detail: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
