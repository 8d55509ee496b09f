use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no valid pixels: {0}")]
    EmptyMask(String),
    #[error("inverse depth map is already focal-normalized")]
    AlreadyNormalized,
    #[error("inverse depth map is not focal-normalized")]
    NotNormalized,
    #[error("invalid depth value {value} at row {row}, column {col}")]
    InvalidDepth { row: usize, col: usize, value: f64 },
    #[error("graph error: {0}")]
    Graph(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
