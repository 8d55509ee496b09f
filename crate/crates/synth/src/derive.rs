//! New camera views from existing samples by cropping and resizing.

use camconv_core::depth::Mask;
use camconv_core::maps::{tap_at, Tap};
use camconv_core::{DepthMap, Grid};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynthError};
use crate::render::{Provenance, Sample};

/// Relative depth jump inside a 2x2 support above which a derived pixel is masked.
pub const DISCONTINUITY_RATIO: f64 = 1.10;

/// Pixel window `[x0, x0 + w) x [y0, y0 + h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropWindow {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl CropWindow {
    pub fn full(w: usize, h: usize) -> Self {
        Self { x0: 0, y0: 0, w, h }
    }

    fn describe(&self) -> String {
        format!("{}x{}+{}+{}", self.w, self.h, self.x0, self.y0)
    }
}

/// Taps along one axis: target index `k` reads window coordinate `k / r`.
fn axis_taps(offset: usize, len: usize, r: f64, out: usize) -> Vec<Tap> {
    (0..out)
        .map(|k| {
            let t = tap_at(k as f64 / r, len);
            Tap {
                lo: t.lo + offset,
                hi: t.hi + offset,
                t: t.t,
            }
        })
        .collect()
}

/// Source pixels carrying non-zero weight.
fn support(t: &Tap) -> &'static [bool] {
    if t.t == 0.0 {
        &[true, false]
    } else {
        &[true, true]
    }
}

/// Crops `window` out of `sample`, then resizes by `(rx, ry)`.
///
/// Target pixel `(u, v)` samples the window at `(u / rx, v / ry)`, which is
/// exactly the ray of the transformed intrinsics. Depth values are
/// interpolated, not rescaled; pixels whose support is invalid or spans a
/// depth discontinuity are masked.
pub fn derive_view(sample: &Sample, window: CropWindow, rx: f64, ry: f64) -> Result<Sample> {
    let cam = sample.cam();
    let (sw, sh) = (cam.width(), cam.height());
    if window.w == 0 || window.h == 0 || window.x0 + window.w > sw || window.y0 + window.h > sh {
        return Err(SynthError::WindowOutOfBounds(window.describe(), sw, sh));
    }
    let cropped = cam.crop(window.x0 as f64, window.y0 as f64, window.w, window.h)?;
    let resized = cropped.resize(rx, ry)?.intrinsics;
    let (tw, th) = (resized.width(), resized.height());
    let cols = axis_taps(window.x0, window.w, rx, tw);
    let rows = axis_taps(window.y0, window.h, ry, th);

    let src_rgb = &sample.rgb;
    let src_d = sample.depth.values();
    let src_m = sample.depth.mask();
    let mut rgb = Grid::zeros(th, tw, 3);
    let mut depth = Grid::zeros(th, tw, 1);
    let mut mask = Mask::all_valid(th, tw);
    for (v, ry_tap) in rows.iter().enumerate() {
        for (u, rx_tap) in cols.iter().enumerate() {
            let lerp2 = |get: &dyn Fn(usize, usize) -> f64| {
                let top = get(ry_tap.lo, rx_tap.lo) + rx_tap.t * (get(ry_tap.lo, rx_tap.hi) - get(ry_tap.lo, rx_tap.lo));
                let bot = get(ry_tap.hi, rx_tap.lo) + rx_tap.t * (get(ry_tap.hi, rx_tap.hi) - get(ry_tap.hi, rx_tap.lo));
                top + ry_tap.t * (bot - top)
            };
            for c in 0..3 {
                let val = lerp2(&|y, x| src_rgb.get(y, x, c) as f64);
                rgb.set(v, u, c, val as f32);
            }
            depth.set(v, u, 0, lerp2(&|y, x| src_d.get(y, x, 0)));
            let (mut lo, mut hi, mut ok) = (f64::INFINITY, 0.0f64, true);
            for (dy, &use_y) in support(ry_tap).iter().enumerate() {
                for (dx, &use_x) in support(rx_tap).iter().enumerate() {
                    if !(use_y && use_x) {
                        continue;
                    }
                    let y = if dy == 0 { ry_tap.lo } else { ry_tap.hi };
                    let x = if dx == 0 { rx_tap.lo } else { rx_tap.hi };
                    ok &= src_m.get(y, x);
                    let d = src_d.get(y, x, 0);
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
            }
            if !ok || hi > lo * DISCONTINUITY_RATIO {
                mask.set(v, u, false);
            }
        }
    }
    Ok(Sample {
        rgb,
        depth: DepthMap::new(depth, mask, resized)?,
        scene_seed: sample.scene_seed,
        provenance: Provenance::Derived {
            pose: *sample.provenance.pose(),
            window: [window.x0, window.y0, window.w, window.h],
            factors: [rx, ry],
        },
    })
}
