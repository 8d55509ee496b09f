//! Training objectives.
//!
//! Each loss exists in two forms: a plain function over grids, and a graph
//! form returning a scalar node whose backward pass is analytic. Both share
//! the same kernels. Values are raw sums over valid pixels; callers divide by
//! the valid-pixel count when they want per-pixel means.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::depth::Mask;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::real::Real;

pub const GRADIENT_SPACINGS: [usize; 5] = [1, 2, 4, 8, 16];
/// Lower bound on the denominator of the scale-invariant difference.
pub const GRADIENT_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub depth: f64,
    pub gradient: f64,
    pub confidence: f64,
    pub normal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            depth: 150.0,
            gradient: 100.0,
            confidence: 50.0,
            normal: 25.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.depth, self.gradient, self.confidence, self.normal];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("loss weights must be non-negative: {self:?}")))
        }
    }
}

/// Per-scale loss terms; `normal` is present only where a normal head exists.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleTerms<V> {
    pub depth: V,
    pub gradient: V,
    pub confidence: V,
    pub normal: Option<V>,
}

/// Fused loss kernels evaluated by the graph.
#[derive(Clone, Debug, PartialEq)]
pub enum LossKernel {
    /// `Σ |p - t|` over valid pixels and all channels.
    L1,
    /// `Σ ‖p - t‖₂` over valid pixels, the norm taken across channels.
    L2Norm,
    /// Multi-spacing scale-invariant gradient matching.
    ScaleInvariantGradient { spacings: Vec<usize>, eps: f64 },
    /// `mean(z²) - mean(z)²` with `z = ln p - ln t`.
    EigenScaleInvariant,
}

fn check_inputs<T: Real>(pred: &Grid<T>, target: &Grid<T>, mask: &Mask) -> Result<()> {
    if !pred.same_shape(target) {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    mask.check_size(pred.height(), pred.width())?;
    if mask.count() == 0 {
        return Err(Error::EmptyMask("loss over an empty mask".into()));
    }
    Ok(())
}

/// Scale-invariant difference `(b - a) / max(|a + b|, eps)`.
#[inline]
fn sig<T: Real>(a: T, b: T, eps: T) -> T {
    (b - a) / (a + b).abs().max(eps)
}

/// Partial derivatives of [`sig`] with respect to `a` and `b`.
#[inline]
fn sig_partials<T: Real>(a: T, b: T, eps: T) -> (T, T) {
    let s = a + b;
    if s.abs() > eps {
        let d = s.abs();
        let sign = s.signum();
        let q = (b - a) / (d * d) * sign;
        (-T::one() / d - q, T::one() / d - q)
    } else {
        (-T::one() / eps, T::one() / eps)
    }
}

/// One component of the gradient operator at a pixel: `(center, neighbor)` offsets.
#[derive(Clone, Copy)]
struct Pair {
    center: usize,
    neighbor: usize,
}

/// Valid x- and y-component pairs of a pixel at spacing `h`.
fn pairs(mask: &Mask, y: usize, x: usize, h: usize) -> [Option<Pair>; 2] {
    let (hh, ww) = (mask.height(), mask.width());
    let c = y * ww + x;
    if !mask.get(y, x) {
        return [None, None];
    }
    let px = (x + h < ww && mask.get(y, x + h)).then_some(Pair {
        center: c,
        neighbor: c + h,
    });
    let py = (y + h < hh && mask.get(y + h, x)).then_some(Pair {
        center: c,
        neighbor: c + h * ww,
    });
    [px, py]
}

impl LossKernel {
    pub fn gradient(spacings: &[usize]) -> Self {
        LossKernel::ScaleInvariantGradient {
            spacings: spacings.to_vec(),
            eps: GRADIENT_EPS,
        }
    }

    pub fn value<T: Real>(&self, pred: &Grid<T>, target: &Grid<T>, mask: &Mask) -> Result<T> {
        check_inputs(pred, target, mask)?;
        let c = pred.channels();
        let pixels = || {
            pred.data()
                .chunks(c)
                .zip(target.data().chunks(c))
                .zip(mask.bits())
                .filter(|(_, &m)| m)
                .map(|(pt, _)| pt)
        };
        Ok(match self {
            LossKernel::L1 => pixels()
                .flat_map(|(p, t)| p.iter().zip(t).map(|(&a, &b)| (a - b).abs()))
                .sum(),
            LossKernel::L2Norm => pixels()
                .map(|(p, t)| p.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt())
                .sum(),
            LossKernel::ScaleInvariantGradient { spacings, eps } => {
                single_channel(pred)?;
                let eps = T::of(*eps);
                let (p, t) = (pred.data(), target.data());
                let mut total = T::zero();
                let mut any = false;
                for &h in spacings {
                    for y in 0..pred.height() {
                        for x in 0..pred.width() {
                            let mut sq = T::zero();
                            let mut valid = false;
                            for pair in pairs(mask, y, x, h).into_iter().flatten() {
                                let d = sig(p[pair.center], p[pair.neighbor], eps)
                                    - sig(t[pair.center], t[pair.neighbor], eps);
                                sq += d * d;
                                valid = true;
                            }
                            if valid {
                                total += sq.sqrt();
                                any = true;
                            }
                        }
                    }
                }
                if !any {
                    return Err(Error::EmptyMask("no valid gradient pairs at any spacing".into()));
                }
                total
            }
            LossKernel::EigenScaleInvariant => {
                single_channel(pred)?;
                let n = T::of(mask.count() as f64);
                let zs = || pixels().map(|(p, t)| p[0].ln() - t[0].ln());
                let mean = zs().sum::<T>() / n;
                let mean_sq = zs().map(|z| z * z).sum::<T>() / n;
                (mean_sq - mean * mean).max(T::zero())
            }
        })
    }

    /// Adds `scale * ∂value/∂pred` into `out`.
    pub fn accumulate_grad<T: Real>(
        &self,
        pred: &Grid<T>,
        target: &Grid<T>,
        mask: &Mask,
        scale: T,
        out: &mut Grid<T>,
    ) -> Result<()> {
        check_inputs(pred, target, mask)?;
        if !out.same_shape(pred) {
            return Err(Error::ShapeMismatch("gradient buffer does not match prediction".into()));
        }
        let c = pred.channels();
        let (p, t) = (pred.data(), target.data());
        let o = out.data_mut();
        match self {
            LossKernel::L1 => {
                for (px, &m) in mask.bits().iter().enumerate() {
                    if !m {
                        continue;
                    }
                    for i in px * c..(px + 1) * c {
                        let d = p[i] - t[i];
                        if d > T::zero() {
                            o[i] += scale;
                        } else if d < T::zero() {
                            o[i] -= scale;
                        }
                    }
                }
            }
            LossKernel::L2Norm => {
                for (px, &m) in mask.bits().iter().enumerate() {
                    if !m {
                        continue;
                    }
                    let r = px * c..(px + 1) * c;
                    let norm = r.clone().map(|i| (p[i] - t[i]) * (p[i] - t[i])).sum::<T>().sqrt();
                    if norm > T::zero() {
                        for i in r {
                            o[i] += scale * (p[i] - t[i]) / norm;
                        }
                    }
                }
            }
            LossKernel::ScaleInvariantGradient { spacings, eps } => {
                let eps = T::of(*eps);
                for &h in spacings {
                    for y in 0..pred.height() {
                        for x in 0..pred.width() {
                            let ps = pairs(mask, y, x, h);
                            let mut deltas = [T::zero(); 2];
                            let mut sq = T::zero();
                            for (k, pair) in ps.iter().enumerate() {
                                if let Some(pair) = pair {
                                    let d = sig(p[pair.center], p[pair.neighbor], eps)
                                        - sig(t[pair.center], t[pair.neighbor], eps);
                                    deltas[k] = d;
                                    sq += d * d;
                                }
                            }
                            let len = sq.sqrt();
                            if len == T::zero() {
                                continue;
                            }
                            for (k, pair) in ps.iter().enumerate() {
                                if let Some(pair) = pair {
                                    let w = scale * deltas[k] / len;
                                    let (da, db) = sig_partials(p[pair.center], p[pair.neighbor], eps);
                                    o[pair.center] += w * da;
                                    o[pair.neighbor] += w * db;
                                }
                            }
                        }
                    }
                }
            }
            LossKernel::EigenScaleInvariant => {
                let n = T::of(mask.count() as f64);
                let valid = || mask.bits().iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i);
                let mean = valid().map(|i| p[i].ln() - t[i].ln()).sum::<T>() / n;
                let two = T::of(2.0);
                for i in valid() {
                    let z = p[i].ln() - t[i].ln();
                    o[i] += scale * two * (z - mean) / (n * p[i]);
                }
            }
        }
        Ok(())
    }
}

fn single_channel<T: Copy + Default>(g: &Grid<T>) -> Result<()> {
    if g.channels() == 1 {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!("expected one channel, got {}", g.channels())))
    }
}

/// Scale-invariant finite differences at spacing `h`.
///
/// Returns the two-channel `(x, y)` component grid and a per-pixel validity
/// mask. Invalid components are zero; a pixel is valid when at least one
/// component is.
pub fn sig_operator<T: Real>(d: &Grid<T>, h: usize, mask: &Mask) -> Result<(Grid<T>, Mask)> {
    single_channel(d)?;
    mask.check_size(d.height(), d.width())?;
    if h == 0 {
        return Err(Error::InvalidArgument("gradient spacing must be >= 1".into()));
    }
    let eps = T::of(GRADIENT_EPS);
    let v = d.data();
    let mut out = Grid::zeros(d.height(), d.width(), 2);
    let mut valid = Mask::from_fn(d.height(), d.width(), |_, _| false);
    for y in 0..d.height() {
        for x in 0..d.width() {
            for (k, pair) in pairs(mask, y, x, h).into_iter().enumerate() {
                if let Some(pair) = pair {
                    out.set(y, x, k, sig(v[pair.center], v[pair.neighbor], eps));
                    valid.set(y, x, true);
                }
            }
        }
    }
    Ok((out, valid))
}

pub fn depth_loss<T: Real>(pred: &Grid<T>, target: &Grid<T>, mask: &Mask) -> Result<T> {
    LossKernel::L1.value(pred, target, mask)
}

pub fn gradient_loss<T: Real>(pred: &Grid<T>, target: &Grid<T>, mask: &Mask) -> Result<T> {
    LossKernel::gradient(&GRADIENT_SPACINGS).value(pred, target, mask)
}

pub fn confidence_loss<T: Real>(pred: &Grid<T>, target: &Grid<T>, mask: &Mask) -> Result<T> {
    LossKernel::L1.value(pred, target, mask)
}

pub fn normal_loss<T: Real>(pred: &Grid<T>, target: &Grid<T>, mask: &Mask) -> Result<T> {
    if pred.channels() != 3 {
        return Err(Error::ShapeMismatch("normal loss expects three channels".into()));
    }
    LossKernel::L2Norm.value(pred, target, mask)
}

pub fn eigen_scale_invariant_loss<T: Real>(pred: &Grid<T>, target: &Grid<T>, mask: &Mask) -> Result<T> {
    LossKernel::EigenScaleInvariant.value(pred, target, mask)
}

/// Weighted sum over scales, every scale weighted equally.
pub fn total_loss(scales: &[ScaleTerms<f64>], weights: &LossWeights) -> f64 {
    scales
        .iter()
        .map(|s| {
            weights.depth * s.depth
                + weights.gradient * s.gradient
                + weights.confidence * s.confidence
                + s.normal.map_or(0.0, |n| weights.normal * n)
        })
        .sum()
}

/// Graph forms of the losses.
pub mod graph {
    use super::*;

    pub fn depth_loss<T: Real>(g: &mut Graph<T>, pred: NodeId, target: &Grid<T>, mask: &Mask) -> Result<NodeId> {
        g.fused_loss(pred, target, mask, LossKernel::L1)
    }

    pub fn gradient_loss<T: Real>(
        g: &mut Graph<T>,
        pred: NodeId,
        target: &Grid<T>,
        mask: &Mask,
    ) -> Result<NodeId> {
        g.fused_loss(pred, target, mask, LossKernel::gradient(&GRADIENT_SPACINGS))
    }

    pub fn confidence_loss<T: Real>(
        g: &mut Graph<T>,
        pred: NodeId,
        target: &Grid<T>,
        mask: &Mask,
    ) -> Result<NodeId> {
        g.fused_loss(pred, target, mask, LossKernel::L1)
    }

    pub fn normal_loss<T: Real>(g: &mut Graph<T>, pred: NodeId, target: &Grid<T>, mask: &Mask) -> Result<NodeId> {
        if g.value(pred).channels() != 3 {
            return Err(Error::ShapeMismatch("normal loss expects three channels".into()));
        }
        g.fused_loss(pred, target, mask, LossKernel::L2Norm)
    }

    pub fn eigen_scale_invariant_loss<T: Real>(
        g: &mut Graph<T>,
        pred: NodeId,
        target: &Grid<T>,
        mask: &Mask,
    ) -> Result<NodeId> {
        g.fused_loss(pred, target, mask, LossKernel::EigenScaleInvariant)
    }

    /// Weighted, equally scale-weighted sum of per-scale loss nodes.
    pub fn total_loss<T: Real>(
        g: &mut Graph<T>,
        scales: &[ScaleTerms<NodeId>],
        weights: &LossWeights,
    ) -> Result<NodeId> {
        let mut terms = Vec::new();
        for s in scales {
            terms.push(g.mul_scalar(s.depth, T::of(weights.depth))?);
            terms.push(g.mul_scalar(s.gradient, T::of(weights.gradient))?);
            terms.push(g.mul_scalar(s.confidence, T::of(weights.confidence))?);
            if let Some(n) = s.normal {
                terms.push(g.mul_scalar(n, T::of(weights.normal))?);
            }
        }
        g.sum_scalars(&terms)
    }
}
