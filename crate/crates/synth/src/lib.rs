//! Synthetic ground truth for camera-aware depth experiments.
//!
//! Scenes are axis-aligned box rooms furnished from a catalog of real-world
//! object sizes, so images carry absolute scale cues. [`render`] ray casts a
//! scene through any pinhole camera; [`derive_view`] produces new cameras
//! from existing samples by crop and resize; [`build_dataset`] writes
//! datasets described by camera-set notation such as `s1·U·f72·f128`.

mod consistency;
mod dataset;
mod derive;
mod error;
mod notation;
mod render;
pub mod scene;

pub use consistency::{camera_consistency_case, percentile, ConsistencyErrors, ConsistencyOutcome};
pub use dataset::{
    build_dataset, generate_samples, load_dataset, read_manifest, Augmentation, Dataset, DatasetSpec, Manifest,
    SampleEntry, MANIFEST_FILE,
};
pub use derive::{derive_view, CropWindow, DISCONTINUITY_RATIO};
pub use error::{Result, SynthError};
pub use notation::{CameraSet, FocalDistribution};
pub use render::{pixel_ray, render, Provenance, Sample};
pub use scene::{generate_scene, sample_pose, Pose, Scene};
