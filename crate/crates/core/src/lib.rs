//! Core building blocks for camera-aware single-view depth prediction.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`] and [`real`]: the dense `(height, width, channels)` array every
//!   other module passes around, generic over `f32`/`f64`.
//! - [`camera`]: isotropic pinhole intrinsics, crop/resize transforms,
//!   focal-length normalization and the named camera presets.
//! - [`maps`]: the six per-pixel camera channels (centered coordinates,
//!   field of view, normalized coordinates) and corner-aligned bilinear
//!   resampling.
//! - [`autodiff`]: a small reverse-mode tape with exactly the operations the
//!   network and the losses need.
//! - [`depth`]: depth / inverse-depth maps, confidence targets, normals.
//! - [`losses`] and [`metrics`]: training objectives and evaluation metrics.
//! - [`pnm`]: PFM / PPM / PGM readers and writers.

pub mod autodiff;
pub mod camera;
pub mod depth;
mod error;
pub mod grid;
pub mod losses;
pub mod maps;
pub mod metrics;
pub mod pnm;
pub mod real;

pub use camera::{CameraIntrinsics, FocalNormalization};
pub use depth::{DepthMap, InverseDepthMap, Mask, NormalMap};
pub use error::{Error, Result};
pub use grid::Grid;
pub use real::Real;
