#![allow(dead_code)]

use camconv_core::Grid;
use camconv_synth::{generate_samples, DatasetSpec, Sample};

pub fn samples(camera: &str, scenes: [u64; 2], views: usize, scale: f64) -> Vec<Sample> {
    generate_samples(&DatasetSpec {
        name: "test".into(),
        camera: camera.into(),
        scene_seeds: scenes,
        views_per_scene: views,
        resolution_scale: scale,
        seed: 3,
        augmentation: None,
    })
    .unwrap()
}

pub fn pattern(h: usize, w: usize) -> Grid<f32> {
    Grid::from_fn(h, w, 3, |y, x, c| ((y * 5 + x * 3 + c * 7) % 13) as f32 / 12.0)
}
