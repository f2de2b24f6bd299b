use std::path::PathBuf;

use crate::frames::Frame;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("frame mismatch: expected a transform from {expected:?}, got one to {found:?}")]
    FrameMismatch { expected: Frame, found: Frame },

    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid camera model: {0}")]
    InvalidCamera(String),

    #[error("point is behind the camera (x = {0})")]
    BehindCamera(f64),

    #[error("path has no waypoints")]
    EmptyPath,

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("source {0} appears more than once in the detection matrix")]
    DuplicateSource(u32),

    #[error("detection box {bbox:?} lies outside crop {crop}")]
    OutOfCrop { bbox: [f64; 4], crop: u32 },

    #[error("detector backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("frame index {index} out of range (scene has {len} frames)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("{}: {err}", path.display())]
    Io { path: PathBuf, err: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            err: source,
        }
    }

    pub(crate) fn format(what: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
