use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign};

/// Floating-point element type of a [`Grid`](crate::Grid) or graph.
///
/// Training runs in `f32`; gradient checks run in `f64`. Both share every code
/// path through this trait.
pub trait Real:
    Float + NumAssign + Default + Debug + Display + Send + Sync + Sum + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` on strided row/column layouts.
    fn gemm(dims: GemmDims, alpha: Self, a: (&[Self], Strides), b: (&[Self], Strides), beta: Self, c: (&mut [Self], Strides));
}

/// `(m, k, n)`: `a` is `m x k`, `b` is `k x n`, `c` is `m x n`.
#[derive(Clone, Copy, Debug)]
pub struct GemmDims {
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

/// Row and column strides in elements.
#[derive(Clone, Copy, Debug)]
pub struct Strides {
    pub row: usize,
    pub col: usize,
}

impl Strides {
    pub fn row_major(cols: usize) -> Self {
        Self { row: cols, col: 1 }
    }

    /// Strides of the transpose of a row-major matrix with `cols` columns.
    pub fn transposed(cols: usize) -> Self {
        Self { row: 1, col: cols }
    }

    fn max_offset(self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * self.row + (cols - 1) * self.col + 1
        }
    }
}

fn check_gemm(d: GemmDims, a: (usize, Strides), b: (usize, Strides), c: (usize, Strides)) {
    assert!(a.0 >= a.1.max_offset(d.m, d.k), "gemm: left operand too short");
    assert!(b.0 >= b.1.max_offset(d.k, d.n), "gemm: right operand too short");
    assert!(c.0 >= c.1.max_offset(d.m, d.n), "gemm: output too short");
}

macro_rules! gemm_impl {
    ($f:ident) => {
        fn gemm(d: GemmDims, alpha: Self, a: (&[Self], Strides), b: (&[Self], Strides), beta: Self, c: (&mut [Self], Strides)) {
            check_gemm(d, (a.0.len(), a.1), (b.0.len(), b.1), (c.0.len(), c.1));
            if d.m == 0 || d.n == 0 {
                return;
            }
            // SAFETY: the extents of all three operands were checked above.
            unsafe {
                matrixmultiply::$f(
                    d.m,
                    d.k,
                    d.n,
                    alpha,
                    a.0.as_ptr(),
                    a.1.row as isize,
                    a.1.col as isize,
                    b.0.as_ptr(),
                    b.1.row as isize,
                    b.1.col as isize,
                    beta,
                    c.0.as_mut_ptr(),
                    c.1.row as isize,
                    c.1.col as isize,
                );
            }
        }
    };
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    gemm_impl!(sgemm);
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    gemm_impl!(dgemm);
}
