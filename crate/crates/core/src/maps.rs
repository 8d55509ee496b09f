//! Camera channel maps concatenated to network features.
//!
//! Six maps are produced, always in this order:
//!
//! | index | name   | meaning                                             |
//! |-------|--------|-----------------------------------------------------|
//! | 0     | `cc_x` | column offset from the principal point (pixels)     |
//! | 1     | `cc_y` | row offset from the principal point (pixels)        |
//! | 2     | `fov_x`| `atan(cc_x / f)` (radians)                          |
//! | 3     | `fov_y`| `atan(cc_y / f)` (radians)                          |
//! | 4     | `nc_x` | column position scaled to `[-1, 1]`                 |
//! | 5     | `nc_y` | row position scaled to `[-1, 1]`                    |
//!
//! `cc` and `fov` are computed at the native sensor resolution and then
//! resampled with corner-aligned bilinear interpolation; `nc` is evaluated
//! directly at the target resolution. Coordinates run over `0..w-1` and
//! `0..h-1`.

use crate::camera::CameraIntrinsics;
use crate::grid::Grid;
use crate::real::Real;

pub const STACK_CHANNELS: usize = 6;
pub const CHANNEL_NAMES: [&str; STACK_CHANNELS] = ["cc_x", "cc_y", "fov_x", "fov_y", "nc_x", "nc_y"];

/// One linear-interpolation tap along an axis: `v[lo] + t * (v[hi] - v[lo])`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub t: f64,
}

/// Corner-aligned sample positions for resampling `src` samples onto `dst`.
///
/// Target index `k` samples source coordinate `k * (src - 1) / (dst - 1)`, so
/// the first and last samples coincide. A single target sample reads the
/// source center.
pub fn corner_aligned_taps(src: usize, dst: usize) -> Vec<Tap> {
    assert!(src >= 1 && dst >= 1, "resampling needs non-empty axes");
    (0..dst)
        .map(|k| {
            let pos = if dst == 1 {
                (src - 1) as f64 / 2.0
            } else {
                (k * (src - 1)) as f64 / (dst - 1) as f64
            };
            tap_at(pos, src)
        })
        .collect()
}

/// Tap for continuous coordinate `pos`, clamped to `[0, src - 1]`.
pub fn tap_at(pos: f64, src: usize) -> Tap {
    let pos = pos.clamp(0.0, (src - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src - 1);
    Tap {
        lo,
        hi,
        t: pos - lo as f64,
    }
}

#[inline]
fn lerp<T: Real>(a: T, b: T, t: T) -> T {
    a + t * (b - a)
}

/// Bilinear resampling with explicit per-axis taps.
pub fn resample_with_taps<T: Real>(map: &Grid<T>, rows: &[Tap], cols: &[Tap]) -> Grid<T> {
    let c = map.channels();
    let mut out = Grid::zeros(rows.len(), cols.len(), c);
    let data = map.data();
    let w = map.width();
    let dst = out.data_mut();
    let mut o = 0;
    for ry in rows {
        let ty = T::of(ry.t);
        for rx in cols {
            let tx = T::of(rx.t);
            let i00 = (ry.lo * w + rx.lo) * c;
            let i01 = (ry.lo * w + rx.hi) * c;
            let i10 = (ry.hi * w + rx.lo) * c;
            let i11 = (ry.hi * w + rx.hi) * c;
            for ch in 0..c {
                let top = lerp(data[i00 + ch], data[i01 + ch], tx);
                let bottom = lerp(data[i10 + ch], data[i11 + ch], tx);
                dst[o] = lerp(top, bottom, ty);
                o += 1;
            }
        }
    }
    out
}

/// Corner-aligned bilinear resampling of every channel to `h x w`.
pub fn resample_bilinear<T: Real>(map: &Grid<T>, h: usize, w: usize) -> Grid<T> {
    if map.height() == h && map.width() == w {
        return map.clone();
    }
    let rows = corner_aligned_taps(map.height(), h);
    let cols = corner_aligned_taps(map.width(), w);
    resample_with_taps(map, &rows, &cols)
}

/// Centered coordinates at native resolution: `cc_x[j,i] = i - cx`, `cc_y[j,i] = j - cy`.
pub fn make_cc(cam: &CameraIntrinsics) -> (Grid<f64>, Grid<f64>) {
    let (w, h) = (cam.width(), cam.height());
    let cc_x = Grid::from_fn(h, w, 1, |_, i, _| i as f64 - cam.cx());
    let cc_y = Grid::from_fn(h, w, 1, |j, _, _| j as f64 - cam.cy());
    (cc_x, cc_y)
}

/// Field-of-view maps `atan(cc / f)` at native resolution, in radians.
pub fn make_fov(cam: &CameraIntrinsics) -> (Grid<f64>, Grid<f64>) {
    let (cc_x, cc_y) = make_cc(cam);
    let f = cam.f();
    (cc_x.map(|v| (v / f).atan()), cc_y.map(|v| (v / f).atan()))
}

/// `-1 + 2k / (n - 1)`, or `0` when the axis has a single sample.
#[inline]
pub fn normalized_coordinate(k: usize, n: usize) -> f64 {
    if n == 1 {
        0.0
    } else {
        -1.0 + (2 * k) as f64 / (n - 1) as f64
    }
}

/// Normalized coordinates in `[-1, 1]`; independent of the camera.
pub fn make_nc(h: usize, w: usize) -> (Grid<f64>, Grid<f64>) {
    let nc_x = Grid::from_fn(h, w, 1, |_, i, _| normalized_coordinate(i, w));
    let nc_y = Grid::from_fn(h, w, 1, |j, _, _| normalized_coordinate(j, h));
    (nc_x, nc_y)
}

/// The six camera channels at a feature resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStack {
    maps: Grid<f64>,
    source_cam: CameraIntrinsics,
}

impl ChannelStack {
    /// `(h, w, 6)` grid with channels in [`CHANNEL_NAMES`] order.
    pub fn maps(&self) -> &Grid<f64> {
        &self.maps
    }

    pub fn source_cam(&self) -> &CameraIntrinsics {
        &self.source_cam
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.maps.height(), self.maps.width())
    }

    pub fn channel(&self, index: usize) -> Grid<f64> {
        self.maps.channel(index)
    }

    pub fn to_grid<T: Real>(&self) -> Grid<T> {
        self.maps.cast()
    }
}

/// Builds the channel stack for `cam` at feature resolution `h x w`.
pub fn make_stack(cam: &CameraIntrinsics, h: usize, w: usize) -> ChannelStack {
    let (cc_x, cc_y) = make_cc(cam);
    let (fov_x, fov_y) = make_fov(cam);
    let (nc_x, nc_y) = make_nc(h, w);
    let rows = corner_aligned_taps(cam.height(), h);
    let cols = corner_aligned_taps(cam.width(), w);
    let native = crate::grid::concat_channels(&[&cc_x, &cc_y, &fov_x, &fov_y]).expect("same native size");
    let resampled = if (h, w) == (cam.height(), cam.width()) {
        native
    } else {
        resample_with_taps(&native, &rows, &cols)
    };
    let maps = crate::grid::concat_channels(&[&resampled, &nc_x, &nc_y]).expect("same target size");
    ChannelStack {
        maps,
        source_cam: *cam,
    }
}
