use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Core(#[from] camconv_core::Error),
    #[error("camera position {0:?} is not inside the room's free space")]
    CameraOutsideRoom([f64; 3]),
    #[error("crop window {0} does not fit the {1}x{2} source image")]
    WindowOutOfBounds(String, usize, usize),
    #[error("invalid camera notation `{0}`: {1}")]
    Notation(String, String),
    #[error("invalid dataset spec: {0}")]
    Spec(String),
    #[error("dataset directory {0} is locked by another build")]
    Locked(PathBuf),
    #[error("malformed dataset at {0}: {1}")]
    Dataset(PathBuf, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;
