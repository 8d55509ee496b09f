use std::path::PathBuf;

use camconv_net::NetError;
use camconv_synth::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("{0}")]
    Usage(String),
    #[error("report does not cover {0}")]
    IncompleteGrid(String),
    #[error("cannot parse {path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Core(#[from] camconv_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// True for problems with what the user asked for, as opposed to failures while doing it.
    pub fn is_config(&self) -> bool {
        match self {
            HarnessError::Spec(_) | HarnessError::Usage(_) | HarnessError::Input { .. } => true,
            HarnessError::Net(e) => matches!(
                e,
                NetError::Config(_) | NetError::TrainConfig(_) | NetError::Shape { .. } | NetError::Synth(SynthError::Notation(..))
            ),
            HarnessError::Synth(e) => matches!(e, SynthError::Notation(..) | SynthError::Spec(_)),
            HarnessError::Core(e) => matches!(
                e,
                camconv_core::Error::InvalidArgument(_) | camconv_core::Error::InvalidIntrinsics(_)
            ),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
