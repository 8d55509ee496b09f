//! Cross-camera geometry checks on rendered scenes.
//!
//! A case renders one scene from one pose through a source camera, then
//! compares it with cameras related by crop and uniform resize.

use camconv_core::CameraIntrinsics;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive::{derive_view, CropWindow};
use crate::error::Result;
use crate::render::{render, Sample};
use crate::scene::{generate_scene, sample_pose, Pose};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyOutcome {
    pub seed: u64,
    /// Largest world-space distance between backprojected points of corresponding pixels.
    pub max_point_error: f64,
    pub compared_points: usize,
    /// Relative depth errors of a derived view against a fresh render, at pixels valid in both.
    pub rel_errors: ConsistencyErrors,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyErrors {
    pub p95: f64,
    pub max: f64,
    pub compared: usize,
}

/// Nearest-rank percentile of `values` (sorted in place).
pub fn percentile(values: &mut [f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

fn world_point(s: &Sample, pose: &Pose, u: usize, v: usize) -> [f64; 3] {
    let d = s.depth.values().get(v, u, 0);
    pose.to_world(s.cam().backproject(u as f64, v as f64, d))
}

fn random_window(rng: &mut ChaCha8Rng, w: usize, h: usize) -> CropWindow {
    let cw = rng.gen_range(w / 2..=w);
    let ch = rng.gen_range(h / 2..=h);
    CropWindow {
        x0: rng.gen_range(0..=w - cw),
        y0: rng.gen_range(0..=h - ch),
        w: cw,
        h: ch,
    }
}

/// Runs one case on a `w x h` source sensor.
///
/// The exact-ray part renders a crop downscaled by an integer factor `k`, so
/// every target pixel shares its ray with source pixel `(x0 + k u, y0 + k v)`.
/// The resample part compares [`derive_view`] with a render through the
/// derived intrinsics at a non-integer uniform factor.
pub fn camera_consistency_case(seed: u64, w: usize, h: usize) -> Result<ConsistencyOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0_5157);
    let scene = generate_scene(seed);
    let pose = sample_pose(&scene, &mut rng);
    let f = rng.gen_range(0.3..0.65) * w as f64;
    let cam = CameraIntrinsics::centered(f, w, h)?;
    let source = render(&scene, &cam, &pose)?;

    let k = rng.gen_range(1..=3usize);
    let win = random_window(&mut rng, w, h);
    let exact_cam = cam
        .crop(win.x0 as f64, win.y0 as f64, win.w, win.h)?
        .resize(1.0 / k as f64, 1.0 / k as f64)?
        .intrinsics;
    let exact = render(&scene, &exact_cam, &pose)?;
    let mut max_point_error = 0.0f64;
    let mut compared_points = 0;
    for v in 0..exact_cam.height() {
        for u in 0..exact_cam.width() {
            let (su, sv) = (win.x0 + k * u, win.y0 + k * v);
            if !(exact.depth.mask().get(v, u) && source.depth.mask().get(sv, su)) {
                continue;
            }
            let a = world_point(&exact, &pose, u, v);
            let b = world_point(&source, &pose, su, sv);
            let dist = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            max_point_error = max_point_error.max(dist);
            compared_points += 1;
        }
    }

    let r = rng.gen_range(0.5..1.5);
    let win = random_window(&mut rng, w, h);
    let derived = derive_view(&source, win, r, r)?;
    let fresh = render(&scene, derived.cam(), &pose)?;
    let mut errs = Vec::new();
    let (dd, fd) = (derived.depth.values(), fresh.depth.values());
    for v in 0..derived.cam().height() {
        for u in 0..derived.cam().width() {
            if derived.depth.mask().get(v, u) && fresh.depth.mask().get(v, u) {
                let truth = fd.get(v, u, 0);
                errs.push((dd.get(v, u, 0) - truth).abs() / truth);
            }
        }
    }
    let compared = errs.len();
    let max = errs.iter().copied().fold(0.0, f64::max);
    Ok(ConsistencyOutcome {
        seed,
        max_point_error,
        compared_points,
        rel_errors: ConsistencyErrors {
            p95: percentile(&mut errs, 0.95),
            max,
            compared,
        },
    })
}
