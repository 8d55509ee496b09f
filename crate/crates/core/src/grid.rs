//! Dense row-major `(height, width, channels)` arrays.

use crate::error::{Error, Result};
use crate::real::Real;

/// Dense multi-channel image / feature map.
///
/// Element `(y, x, ch)` lives at `(y * width + x) * channels + ch`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Grid<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, T::default())
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "buffer of {} elements for grid {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds a grid by evaluating `f(y, x, ch)` for every element.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for ch in 0..channels {
                    data.push(f(y, x, ch));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, ch: usize) -> usize {
        debug_assert!(y < self.height && x < self.width && ch < self.channels);
        (y * self.width + x) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, ch: usize) -> T {
        self.data[self.index(y, x, ch)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, ch: usize, value: T) {
        let i = self.index(y, x, ch);
        self.data[i] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Copies out a single channel as a `(h, w, 1)` grid.
    pub fn channel(&self, ch: usize) -> Grid<T> {
        assert!(ch < self.channels, "channel {ch} out of range");
        Grid {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.data.iter().skip(ch).step_by(self.channels).copied().collect(),
        }
    }

    pub fn map<U: Copy + Default>(&self, f: impl FnMut(T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    /// Copies the window `[y0, y0 + h) x [x0, x0 + w)`. The window must lie inside the grid.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Grid<T>> {
        if y0 + h > self.height || x0 + w > self.width || h == 0 || w == 0 {
            return Err(Error::InvalidArgument(format!(
                "crop window {h}x{w} at ({y0}, {x0}) outside {}x{} grid",
                self.height, self.width
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(h * w * c);
        for y in y0..y0 + h {
            let start = self.index(y, x0, 0);
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        Ok(Grid {
            height: h,
            width: w,
            channels: c,
            data,
        })
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }
}

impl<T: Real> Grid<T> {
    pub fn cast<U: Real>(&self) -> Grid<U> {
        self.map(|v| U::of(v.as_f64()))
    }

    /// The single value of a `1x1x1` grid.
    pub fn scalar(&self) -> Option<T> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Concatenates grids of equal spatial size along the channel axis.
pub fn concat_channels<T: Copy + Default>(parts: &[&Grid<T>]) -> Result<Grid<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat of zero grids".into()))?;
    let (h, w) = (first.height, first.width);
    if let Some(bad) = parts.iter().find(|g| g.height != h || g.width != w) {
        return Err(Error::ShapeMismatch(format!(
            "concat of {}x{} with {}x{}",
            h, w, bad.height, bad.width
        )));
    }
    let c: usize = parts.iter().map(|g| g.channels).sum();
    let mut data = Vec::with_capacity(h * w * c);
    for p in 0..h * w {
        for g in parts {
            data.extend_from_slice(&g.data[p * g.channels..(p + 1) * g.channels]);
        }
    }
    Ok(Grid {
        height: h,
        width: w,
        channels: c,
        data,
    })
}
