//! 2-D cross-correlation kernels on channel-last buffers.
//!
//! Kernels are stored as a `(kh, kw, cin * cout)` grid with element
//! `(ky, kx, ci * cout + co)`, which is also the row-major layout of the
//! `(kh * kw * cin) x cout` matrix used by the patch-matrix product.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::real::{GemmDims, Real, Strides};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Padding {
    /// Output size `ceil(n / stride)`, zero padding split with the smaller half first.
    Same,
    /// No padding; output size `(n - k) / stride + 1`.
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

fn axis(n: usize, k: usize, stride: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = n.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(n);
            Some((out, total / 2))
        }
        Padding::Valid => (n >= k).then(|| ((n - k) / stride + 1, 0)),
    }
}

impl ConvGeometry {
    pub fn new(
        input: (usize, usize, usize),
        kernel: (usize, usize, usize),
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        let (in_h, in_w, cin) = input;
        let (kh, kw, kc) = kernel;
        if stride == 0 {
            return Err(Error::InvalidArgument("convolution stride must be >= 1".into()));
        }
        if cin == 0 || kc % cin != 0 || kc == 0 {
            return Err(Error::ShapeMismatch(format!(
                "kernel with {kc} packed channels does not match {cin} input channels"
            )));
        }
        let cout = kc / cin;
        let (out_h, pad_top) = axis(in_h, kh, stride, padding)
            .ok_or_else(|| Error::ShapeMismatch(format!("kernel height {kh} exceeds input {in_h}")))?;
        let (out_w, pad_left) = axis(in_w, kw, stride, padding)
            .ok_or_else(|| Error::ShapeMismatch(format!("kernel width {kw} exceeds input {in_w}")))?;
        Ok(Self {
            in_h,
            in_w,
            cin,
            kh,
            kw,
            cout,
            stride,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    #[inline]
    fn source(&self, o: usize, k: usize, pad: usize, n: usize) -> Option<usize> {
        let p = (o * self.stride + k).checked_sub(pad)?;
        (p < n).then_some(p)
    }
}

/// Patch matrix with one row per output pixel and `kh * kw * cin` columns; padding reads as zero.
pub fn im2col<T: Real>(x: &[T], g: &ConvGeometry) -> Vec<T> {
    let cin = g.cin;
    let zeros = vec![T::zero(); g.kw * cin];
    let mut a = Vec::with_capacity(g.out_h * g.out_w * g.kh * g.kw * cin);
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let first = (ox * g.stride).checked_sub(g.pad_left);
            let interior = matches!(first, Some(ix) if ix + g.kw <= g.in_w);
            for ky in 0..g.kh {
                let Some(iy) = g.source(oy, ky, g.pad_top, g.in_h) else {
                    a.extend_from_slice(&zeros);
                    continue;
                };
                if let (true, Some(ix)) = (interior, first) {
                    // The kernel row covers `kw` adjacent input pixels.
                    a.extend_from_slice(&x[(iy * g.in_w + ix) * cin..][..g.kw * cin]);
                    continue;
                }
                for kx in 0..g.kw {
                    match g.source(ox, kx, g.pad_left, g.in_w) {
                        Some(ix) => a.extend_from_slice(&x[(iy * g.in_w + ix) * cin..][..cin]),
                        None => a.extend_from_slice(&zeros[..cin]),
                    }
                }
            }
        }
    }
    a
}

/// Scatter-adds a patch-matrix gradient back onto the input.
fn col2im<T: Real>(cols_grad: &[T], g: &ConvGeometry, dx: &mut [T]) {
    let cin = g.cin;
    let cols = g.kh * g.kw * cin;
    let span = g.kw * cin;
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = &cols_grad[(oy * g.out_w + ox) * cols..][..cols];
            let first = (ox * g.stride).checked_sub(g.pad_left);
            let interior = matches!(first, Some(ix) if ix + g.kw <= g.in_w);
            for ky in 0..g.kh {
                let Some(iy) = g.source(oy, ky, g.pad_top, g.in_h) else { continue };
                if let (true, Some(ix)) = (interior, first) {
                    let src = &row[ky * span..][..span];
                    for (d, &v) in dx[(iy * g.in_w + ix) * cin..][..span].iter_mut().zip(src) {
                        *d += v;
                    }
                    continue;
                }
                for kx in 0..g.kw {
                    let Some(ix) = g.source(ox, kx, g.pad_left, g.in_w) else { continue };
                    let src = &row[(ky * g.kw + kx) * cin..][..cin];
                    for (d, &v) in dx[(iy * g.in_w + ix) * cin..][..cin].iter_mut().zip(src) {
                        *d += v;
                    }
                }
            }
        }
    }
}

fn dims(g: &ConvGeometry) -> (usize, usize, usize) {
    (g.out_h * g.out_w, g.kh * g.kw * g.cin, g.cout)
}

/// The kernel grid is already the row-major `(kh * kw * cin) x cout` matrix, so
/// the convolution is one product with the patch matrix.
pub fn forward<T: Real>(x: &[T], kernel: &[T], bias: Option<&[T]>, g: &ConvGeometry) -> Vec<T> {
    forward_patches(&im2col(x, g), kernel, bias, g)
}

/// Forward pass from a precomputed [`im2col`] matrix.
pub fn forward_patches<T: Real>(a: &[T], kernel: &[T], bias: Option<&[T]>, g: &ConvGeometry) -> Vec<T> {
    let (p, k, n) = dims(g);
    let mut out = vec![T::zero(); p * n];
    if let Some(b) = bias {
        for row in out.chunks_mut(n) {
            row.copy_from_slice(b);
        }
    }
    T::gemm(
        GemmDims { m: p, k, n },
        T::one(),
        (a, Strides::row_major(k)),
        (kernel, Strides::row_major(n)),
        T::one(),
        (&mut out, Strides::row_major(n)),
    );
    out
}

/// Accumulates input, kernel and bias gradients for upstream gradient `dy`.
///
/// `patches` is the [`im2col`] matrix of `x` if the caller kept it.
#[allow(clippy::too_many_arguments)]
pub fn backward<T: Real>(
    x: &[T],
    patches: Option<&[T]>,
    kernel: &[T],
    dy: &[T],
    g: &ConvGeometry,
    dx: Option<&mut [T]>,
    dk: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    let (p, k, n) = dims(g);
    if let Some(db) = db {
        for row in dy.chunks(n) {
            for (b, &v) in db.iter_mut().zip(row) {
                *b += v;
            }
        }
    }
    if let Some(dk) = dk {
        let owned;
        let a = match patches {
            Some(a) => a,
            None => {
                owned = im2col(x, g);
                &owned
            }
        };
        T::gemm(
            GemmDims { m: k, k: p, n },
            T::one(),
            (a, Strides::transposed(k)),
            (dy, Strides::row_major(n)),
            T::one(),
            (dk, Strides::row_major(n)),
        );
    }
    if let Some(dx) = dx {
        let mut dcols = vec![T::zero(); p * k];
        T::gemm(
            GemmDims { m: p, k: n, n: k },
            T::one(),
            (dy, Strides::row_major(n)),
            (kernel, Strides::transposed(n)),
            T::zero(),
            (&mut dcols, Strides::row_major(k)),
        );
        col2im(&dcols, g, dx);
    }
}

/// Direct nested-loop convolution, kept as an independent reference.
pub fn reference_conv2d(
    x: &Grid<f64>,
    kernel: &Grid<f64>,
    bias: Option<&[f64]>,
    stride: usize,
    padding: Padding,
) -> Result<Grid<f64>> {
    let g = ConvGeometry::new(x.shape(), kernel.shape(), stride, padding)?;
    let mut out = Grid::zeros(g.out_h, g.out_w, g.cout);
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            for co in 0..g.cout {
                let mut acc = bias.map_or(0.0, |b| b[co]);
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let iy = (oy * stride + ky) as isize - g.pad_top as isize;
                        let ix = (ox * stride + kx) as isize - g.pad_left as isize;
                        if iy < 0 || ix < 0 || iy >= g.in_h as isize || ix >= g.in_w as isize {
                            continue;
                        }
                        for ci in 0..g.cin {
                            acc += x.get(iy as usize, ix as usize, ci)
                                * kernel.get(ky, kx, ci * g.cout + co);
                        }
                    }
                }
                out.set(oy, ox, co, acc);
            }
        }
    }
    Ok(out)
}
