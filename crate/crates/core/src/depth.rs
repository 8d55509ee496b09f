//! Depth and inverse-depth maps, confidence targets and surface normals.

use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::real::Real;

/// Per-pixel validity bitmap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "mask of {} entries for {height}x{width}",
                bits.len()
            )));
        }
        Ok(Self { height, width, bits })
    }

    pub fn all_valid(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![true; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(y, x));
            }
        }
        Self { height, width, bits }
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        self.check_size(other.height, other.width)?;
        Ok(Mask {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        })
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Mask> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::InvalidArgument("mask crop outside bounds".into()));
        }
        Ok(Mask::from_fn(h, w, |y, x| self.get(y0 + y, x0 + x)))
    }

    pub fn check_size(&self, height: usize, width: usize) -> Result<()> {
        if self.height != height || self.width != width {
            return Err(Error::ShapeMismatch(format!(
                "mask {}x{} vs grid {height}x{width}",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

/// Valid metric depth range; pixels outside are masked.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for DepthBounds {
    fn default() -> Self {
        Self { min: 0.1, max: 100.0 }
    }
}

impl DepthBounds {
    pub fn contains(&self, d: f64) -> bool {
        d.is_finite() && d > 0.0 && d >= self.min && d <= self.max
    }
}

fn check_valid_positive(values: &Grid<f64>, mask: &Mask) -> Result<()> {
    mask.check_size(values.height(), values.width())?;
    if values.channels() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "depth maps have one channel, got {}",
            values.channels()
        )));
    }
    for y in 0..values.height() {
        for x in 0..values.width() {
            let v = values.get(y, x, 0);
            if mask.get(y, x) && !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidDepth { row: y, col: x, value: v });
            }
        }
    }
    Ok(())
}

/// Dense metric Z-depth in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    values: Grid<f64>,
    mask: Mask,
    cam: CameraIntrinsics,
}

impl DepthMap {
    pub fn new(values: Grid<f64>, mask: Mask, cam: CameraIntrinsics) -> Result<Self> {
        check_valid_positive(&values, &mask)?;
        check_camera(&values, &cam)?;
        Ok(Self { values, mask, cam })
    }

    /// Masks every pixel that is non-finite, non-positive or outside `bounds`.
    pub fn from_values(values: Grid<f64>, cam: CameraIntrinsics, bounds: DepthBounds) -> Result<Self> {
        let mask = Mask::from_fn(values.height(), values.width(), |y, x| {
            bounds.contains(values.get(y, x, 0))
        });
        Self::new(values, mask, cam)
    }

    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }
    pub fn mask(&self) -> &Mask {
        &self.mask
    }
    pub fn cam(&self) -> &CameraIntrinsics {
        &self.cam
    }
    pub fn height(&self) -> usize {
        self.values.height()
    }
    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn into_parts(self) -> (Grid<f64>, Mask, CameraIntrinsics) {
        (self.values, self.mask, self.cam)
    }
}

fn check_camera(values: &Grid<f64>, cam: &CameraIntrinsics) -> Result<()> {
    if cam.width() != values.width() || cam.height() != values.height() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} map for a {}x{} sensor",
            values.width(),
            values.height(),
            cam.width(),
            cam.height()
        )));
    }
    Ok(())
}

/// Whether inverse depth is metric (`1/m`) or normalized to a reference focal length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DepthNormalization {
    Metric,
    NormalizedTo(f64),
}

/// Dense inverse depth.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseDepthMap {
    values: Grid<f64>,
    mask: Mask,
    cam: CameraIntrinsics,
    normalization: DepthNormalization,
}

impl InverseDepthMap {
    pub fn new(
        values: Grid<f64>,
        mask: Mask,
        cam: CameraIntrinsics,
        normalization: DepthNormalization,
    ) -> Result<Self> {
        check_valid_positive(&values, &mask)?;
        check_camera(&values, &cam)?;
        Ok(Self {
            values,
            mask,
            cam,
            normalization,
        })
    }

    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }
    pub fn mask(&self) -> &Mask {
        &self.mask
    }
    pub fn cam(&self) -> &CameraIntrinsics {
        &self.cam
    }
    pub fn normalization(&self) -> DepthNormalization {
        self.normalization
    }

    pub(crate) fn set_normalization(&mut self, n: DepthNormalization) {
        self.normalization = n;
    }

    pub(crate) fn scale_valid(&mut self, mut f: impl FnMut(f64) -> f64) {
        let w = self.values.width();
        for (p, v) in self.values.data_mut().iter_mut().enumerate() {
            if self.mask.get(p / w, p % w) {
                *v = f(*v);
            }
        }
    }
}

/// Elementwise reciprocal on valid pixels; masked pixels are copied untouched.
pub fn to_inverse(d: &DepthMap) -> InverseDepthMap {
    let mut values = d.values.clone();
    reciprocal_valid(&mut values, &d.mask);
    InverseDepthMap {
        values,
        mask: d.mask.clone(),
        cam: d.cam,
        normalization: DepthNormalization::Metric,
    }
}

/// Elementwise reciprocal of a metric inverse-depth map.
pub fn to_depth(xi: &InverseDepthMap) -> Result<DepthMap> {
    if xi.normalization != DepthNormalization::Metric {
        return Err(Error::InvalidArgument(
            "denormalize inverse depth before converting to depth".into(),
        ));
    }
    let mut values = xi.values.clone();
    reciprocal_valid(&mut values, &xi.mask);
    Ok(DepthMap {
        values,
        mask: xi.mask.clone(),
        cam: xi.cam,
    })
}

fn reciprocal_valid(values: &mut Grid<f64>, mask: &Mask) {
    let w = values.width();
    for (p, v) in values.data_mut().iter_mut().enumerate() {
        if mask.get(p / w, p % w) {
            *v = 1.0 / *v;
        }
    }
}

/// Confidence target `exp(-|ξ - ξ̂|)`.
///
/// The result is a plain grid: it is used as a fixed regression target and no
/// gradient flows back into the prediction through it.
pub fn confidence_target<T: Real>(xi_pred: &Grid<T>, xi_gt: &Grid<T>) -> Result<Grid<T>> {
    if !xi_pred.same_shape(xi_gt) {
        return Err(Error::ShapeMismatch(format!(
            "confidence target of {:?} vs {:?}",
            xi_pred.shape(),
            xi_gt.shape()
        )));
    }
    let data = xi_pred
        .data()
        .iter()
        .zip(xi_gt.data())
        .map(|(&p, &g)| (-(p - g).abs()).exp())
        .collect();
    Grid::from_vec(xi_pred.height(), xi_pred.width(), xi_pred.channels(), data)
}

/// Unit surface normals, camera-facing (`n_z < 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct NormalMap {
    values: Grid<f64>,
    mask: Mask,
}

impl NormalMap {
    pub fn new(values: Grid<f64>, mask: Mask) -> Result<Self> {
        if values.channels() != 3 {
            return Err(Error::ShapeMismatch("normal maps have 3 channels".into()));
        }
        mask.check_size(values.height(), values.width())?;
        Ok(Self { values, mask })
    }

    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }
    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn normal(&self, y: usize, x: usize) -> [f64; 3] {
        [
            self.values.get(y, x, 0),
            self.values.get(y, x, 1),
            self.values.get(y, x, 2),
        ]
    }
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Normals from central differences of backprojected points.
///
/// For each pixel with all four neighbours valid, `t_x = P(i+1,j) - P(i-1,j)`
/// and `t_y = P(i,j+1) - P(i,j-1)`; the normal is `t_x × t_y` normalized and
/// flipped to face the camera. Border pixels and pixels with an invalid
/// neighbour are masked.
pub fn normals_from_depth(d: &DepthMap) -> Result<NormalMap> {
    let (h, w) = (d.height(), d.width());
    if d.mask.count() == 0 {
        return Err(Error::EmptyMask("normals from an all-masked depth map".into()));
    }
    let cam = d.cam;
    let point = |y: usize, x: usize| cam.backproject(x as f64, y as f64, d.values.get(y, x, 0));
    let mut values = Grid::zeros(h, w, 3);
    let mut mask = Mask::from_fn(h, w, |_, _| false);
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let ok = d.mask.get(y, x)
                && d.mask.get(y, x - 1)
                && d.mask.get(y, x + 1)
                && d.mask.get(y - 1, x)
                && d.mask.get(y + 1, x);
            if !ok {
                continue;
            }
            let tx = sub3(point(y, x + 1), point(y, x - 1));
            let ty = sub3(point(y + 1, x), point(y - 1, x));
            let mut n = cross3(tx, ty);
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if !(len.is_finite() && len > 0.0) {
                continue;
            }
            let sign = if n[2] > 0.0 { -1.0 } else { 1.0 };
            for v in n.iter_mut() {
                *v *= sign / len;
            }
            if n[2] >= 0.0 {
                // Tangent plane contains the viewing ray; no camera-facing side.
                continue;
            }
            for (c, v) in n.iter().enumerate() {
                values.set(y, x, c, *v);
            }
            mask.set(y, x, true);
        }
    }
    NormalMap::new(values, mask)
}
