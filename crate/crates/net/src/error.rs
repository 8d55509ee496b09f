use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Core(#[from] camconv_core::Error),
    #[error(transparent)]
    Synth(#[from] camconv_synth::SynthError),
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("invalid training config: {0}")]
    TrainConfig(String),
    #[error("{got_w}x{got_h} input does not fit the model: {reason}")]
    Shape { got_w: usize, got_h: usize, reason: String },
    #[error("loss became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("missing parameter tensor `{0}`")]
    MissingTensor(String),
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;
