//! Isotropic pinhole camera model.
//!
//! # Pixel convention
//!
//! Integer pixel index `p` is the continuous image coordinate `p`; there is no
//! `+0.5` pixel-center offset. A pixel `(i, j)` (column, row) therefore looks
//! along the ray `((i - cx) / f, (j - cy) / f, 1)` in camera coordinates
//! (x right, y down, z forward). Crops subtract integer or fractional offsets
//! from the principal point and resizes multiply every coordinate by the scale
//! factor, both consistent with this convention.

use serde::{Deserialize, Serialize};

use crate::depth::{DepthNormalization, InverseDepthMap};
use crate::error::{Error, Result};
use crate::real::Real;

/// Focal length, principal point and sensor size, all in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsRecord", into = "IntrinsicsRecord")]
pub struct CameraIntrinsics {
    f: f64,
    cx: f64,
    cy: f64,
    w: usize,
    h: usize,
}

impl CameraIntrinsics {
    pub fn new(f: f64, cx: f64, cy: f64, w: usize, h: usize) -> Result<Self> {
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::InvalidIntrinsics(format!("focal length {f} must be positive")));
        }
        if w == 0 || h == 0 {
            return Err(Error::InvalidIntrinsics(format!("sensor {w}x{h} must be non-empty")));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) must be finite"
            )));
        }
        Ok(Self { f, cx, cy, w, h })
    }

    /// Camera with the principal point at `(w / 2, h / 2)`.
    pub fn centered(f: f64, w: usize, h: usize) -> Result<Self> {
        Self::new(f, w as f64 / 2.0, h as f64 / 2.0, w, h)
    }

    #[inline]
    pub fn f(&self) -> f64 {
        self.f
    }
    #[inline]
    pub fn cx(&self) -> f64 {
        self.cx
    }
    #[inline]
    pub fn cy(&self) -> f64 {
        self.cy
    }
    #[inline]
    pub fn width(&self) -> usize {
        self.w
    }
    #[inline]
    pub fn height(&self) -> usize {
        self.h
    }

    /// Intrinsics of the window `[x0, x0 + w) x [y0, y0 + h)`.
    ///
    /// The focal length is unchanged and the principal point moves by the
    /// window offset. The window may extend past the sensor.
    pub fn crop(&self, x0: f64, y0: f64, w: usize, h: usize) -> Result<Self> {
        Self::new(self.f, self.cx - x0, self.cy - y0, w, h)
    }

    /// Scales the image by `rx` horizontally and `ry` vertically.
    ///
    /// Sensor sizes are rounded half away from zero. With `rx == ry` the result
    /// is exact; otherwise the single focal length is replaced by the average
    /// `f * (rx + ry) / 2` and [`Resized::approximate`] is set.
    pub fn resize(&self, rx: f64, ry: f64) -> Result<Resized> {
        if !(rx.is_finite() && ry.is_finite() && rx > 0.0 && ry > 0.0) {
            return Err(Error::InvalidArgument(format!("resize factors ({rx}, {ry}) must be positive")));
        }
        let w = (self.w as f64 * rx).round() as usize;
        let h = (self.h as f64 * ry).round() as usize;
        if w == 0 || h == 0 {
            return Err(Error::InvalidArgument(format!(
                "resizing {}x{} by ({rx}, {ry}) leaves an empty sensor",
                self.w, self.h
            )));
        }
        let approximate = rx != ry;
        let f_avg = if approximate { self.f * (rx + ry) / 2.0 } else { self.f * rx };
        Ok(Resized {
            intrinsics: Self::new(f_avg, self.cx * rx, self.cy * ry, w, h)?,
            f_avg,
            approximate,
        })
    }

    /// Camera-frame point seen by pixel `(i, j)` at Z-depth `d`.
    pub fn backproject(&self, i: f64, j: f64, d: f64) -> [f64; 3] {
        [(i - self.cx) * d / self.f, (j - self.cy) * d / self.f, d]
    }

    /// Pixel coordinates of a camera-frame point with positive Z.
    pub fn project(&self, p: [f64; 3]) -> (f64, f64) {
        (self.f * p[0] / p[2] + self.cx, self.f * p[1] / p[2] + self.cy)
    }

    /// Full horizontal field of view in radians, measured across pixel columns `0..w-1`.
    pub fn horizontal_fov(&self) -> f64 {
        let right = (self.w as f64 - 1.0 - self.cx) / self.f;
        let left = (0.0 - self.cx) / self.f;
        right.atan() - left.atan()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("intrinsics always serialize")
    }
}

/// Output of [`CameraIntrinsics::resize`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Resized {
    pub intrinsics: CameraIntrinsics,
    /// Average focal length `f * (rx + ry) / 2`.
    pub f_avg: f64,
    /// Set when `rx != ry` and the isotropic model cannot represent the result.
    pub approximate: bool,
}

pub fn make_intrinsics(f: f64, cx: f64, cy: f64, w: usize, h: usize) -> Result<CameraIntrinsics> {
    CameraIntrinsics::new(f, cx, cy, w, h)
}

pub fn crop_intrinsics(
    cam: &CameraIntrinsics,
    x0: f64,
    y0: f64,
    w: usize,
    h: usize,
) -> Result<CameraIntrinsics> {
    cam.crop(x0, y0, w, h)
}

pub fn resize_intrinsics(cam: &CameraIntrinsics, rx: f64, ry: f64) -> Result<Resized> {
    cam.resize(rx, ry)
}

pub fn backproject(cam: &CameraIntrinsics, i: f64, j: f64, d: f64) -> [f64; 3] {
    cam.backproject(i, j, d)
}

/// JSON sidecar record: `{"f","cx","cy","w","h","focal_normalized_to"}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsRecord {
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
    pub w: usize,
    pub h: usize,
    #[serde(default)]
    pub focal_normalized_to: Option<f64>,
}

impl TryFrom<IntrinsicsRecord> for CameraIntrinsics {
    type Error = Error;
    fn try_from(r: IntrinsicsRecord) -> Result<Self> {
        CameraIntrinsics::new(r.f, r.cx, r.cy, r.w, r.h)
    }
}

impl From<CameraIntrinsics> for IntrinsicsRecord {
    fn from(c: CameraIntrinsics) -> Self {
        IntrinsicsRecord {
            f: c.f,
            cx: c.cx,
            cy: c.cy,
            w: c.w,
            h: c.h,
            focal_normalized_to: None,
        }
    }
}

impl IntrinsicsRecord {
    pub fn with_normalization(cam: &CameraIntrinsics, normalized_to: Option<f64>) -> Self {
        IntrinsicsRecord {
            focal_normalized_to: normalized_to,
            ..IntrinsicsRecord::from(*cam)
        }
    }
}

/// Default focal length that inverse depth is normalized to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocalNormalization {
    f_n: f64,
}

impl FocalNormalization {
    pub fn new(f_n: f64) -> Result<Self> {
        if !(f_n.is_finite() && f_n > 0.0) {
            return Err(Error::InvalidArgument(format!("normalization focal {f_n} must be positive")));
        }
        Ok(Self { f_n })
    }

    pub fn f_n(&self) -> f64 {
        self.f_n
    }

    /// `f / f_n`: multiplying metric inverse depth by this gives normalized inverse depth.
    pub fn ratio(&self, f: f64) -> f64 {
        f / self.f_n
    }

    /// `ξ̃ = (f / f_n) · ξ`.
    pub fn normalize_value<T: Real>(&self, f: f64, xi: T) -> T {
        xi * T::of(self.ratio(f))
    }

    /// `ξ = (f_n / f) · ξ̃`, evaluated as a division by `f / f_n` so that it
    /// undoes [`normalize_value`](Self::normalize_value) up to one rounding.
    pub fn denormalize_value<T: Real>(&self, f: f64, xi_n: T) -> T {
        xi_n / T::of(self.ratio(f))
    }
}

impl Default for FocalNormalization {
    fn default() -> Self {
        Self { f_n: FOCAL_PRESETS[3].1 }
    }
}

/// Rescales every valid pixel of a metric inverse-depth map by `f / f_n`.
pub fn normalize_inverse_depth(
    xi: &InverseDepthMap,
    norm: &FocalNormalization,
) -> Result<InverseDepthMap> {
    if xi.normalization() != DepthNormalization::Metric {
        return Err(Error::AlreadyNormalized);
    }
    let f = xi.cam().f();
    let mut out = xi.clone();
    out.scale_valid(|v| norm.normalize_value(f, v));
    out.set_normalization(DepthNormalization::NormalizedTo(norm.f_n()));
    Ok(out)
}

/// Inverse of [`normalize_inverse_depth`].
pub fn denormalize_inverse_depth(
    xi_n: &InverseDepthMap,
    norm: &FocalNormalization,
) -> Result<InverseDepthMap> {
    match xi_n.normalization() {
        DepthNormalization::Metric => return Err(Error::NotNormalized),
        DepthNormalization::NormalizedTo(f_n) if f_n != norm.f_n() => {
            return Err(Error::InvalidArgument(format!(
                "map normalized to f_n = {f_n}, asked to denormalize from {}",
                norm.f_n()
            )))
        }
        _ => {}
    }
    let f = xi_n.cam().f();
    let mut out = xi_n.clone();
    out.scale_valid(|v| norm.denormalize_value(f, v));
    out.set_normalization(DepthNormalization::Metric);
    Ok(out)
}

/// Sensor sizes `(name, width, height)`.
pub const SENSOR_PRESETS: [(&str, usize, usize); 7] = [
    ("s1", 256, 192),
    ("s2", 192, 256),
    ("s3", 224, 224),
    ("s4", 128, 96),
    ("s5", 320, 320),
    ("sS", 256, 192),
    ("sK", 384, 128),
];

/// Focal lengths `(name, pixels)`.
pub const FOCAL_PRESETS: [(&str, f64); 4] = [("f72", 72.0), ("f128", 128.0), ("f64", 64.0), ("fn", 100.0)];

pub fn sensor_preset(name: &str) -> Option<(usize, usize)> {
    SENSOR_PRESETS
        .iter()
        .find(|(n, _, _)| *n == name)
        .map(|&(_, w, h)| (w, h))
}

pub fn focal_preset(name: &str) -> Option<f64> {
    FOCAL_PRESETS.iter().find(|(n, _)| *n == name).map(|&(_, f)| f)
}

/// A named sensor + focal combination, e.g. `s1·f72`.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraPreset {
    pub name: String,
    pub intrinsics: CameraIntrinsics,
}

/// Every sensor x focal combination, principal point at the sensor center.
pub fn preset_table() -> Vec<CameraPreset> {
    let mut out = Vec::with_capacity(SENSOR_PRESETS.len() * FOCAL_PRESETS.len());
    for &(sn, w, h) in &SENSOR_PRESETS {
        for &(fname, f) in &FOCAL_PRESETS {
            out.push(CameraPreset {
                name: format!("{sn}·{fname}"),
                intrinsics: CameraIntrinsics::centered(f, w, h).expect("preset values are valid"),
            });
        }
    }
    out
}

/// Looks up a preset by name; accepts `s1·f72`, `s1f72` or `s1 f72`.
pub fn preset(name: &str) -> Option<CameraPreset> {
    let key: String = name.chars().filter(|c| !matches!(c, '·' | ' ')).collect();
    preset_table()
        .into_iter()
        .find(|p| p.name.replace('·', "") == key)
}
