use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid depth {0}: must be positive and finite")]
    InvalidDepth(f64),

    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),

    #[error("singular alignment system: {0}")]
    SingularSystem(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("nothing to inpaint from: the image has no known pixels")]
    NothingToInpaintFrom,

    #[error("adapter unavailable ({capability}): {message}")]
    AdapterUnavailable { capability: String, message: String },

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("incomplete view-time matrix: {0}")]
    IncompleteMatrix(String),

    #[error("format error in {path}: {message}")]
    FormatError { path: PathBuf, message: String },

    #[error("missing cell (view {view}, t {t}): {path}")]
    MissingCell { view: usize, t: usize, path: PathBuf },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::FormatError {
            path: path.into(),
            message: message.into(),
        }
    }
}
