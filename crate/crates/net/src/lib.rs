//! A small encoder-decoder depth network whose bottleneck and skip
//! connections can take per-pixel camera channels.
//!
//! [`build`] lays out and initializes parameters, [`forward`] and
//! [`predict_depth`] evaluate them, and [`train_on_samples`] fits them with
//! Adam, sharing one parameter set across every sensor size in the data.

pub mod checkpoint;
mod config;
mod error;
mod forward;
mod model;
mod targets;
mod train;

pub use config::{AdamConfig, Heads, NetConfig, TrainConfig};
pub use error::{NetError, Result};
pub use forward::{
    build_graph, cc_scale, check_input, forward, predict_depth, stage_sizes, LevelNodes, LevelPrediction, ParamNodes, Prediction,
    XI_FLOOR,
};
pub use model::{build, camconv_weight_count, decoder_channels, encoder_channels, layer_plan, LayerRole, LayerSpec, ModelParams};
pub use targets::{
    confidence_targets, head_targets, level_targets, sample_loss, train_item, LevelTarget, NormalTarget, TrainItem,
};
pub use train::{
    check_network_gradients, loss_and_grads, network_check_options, summarize, train, train_on_samples, Adam, NetworkGradCheck, TrainOutcome,
};
