//! Ground-truth pyramids and the per-sample training loss.

use camconv_core::autodiff::{Graph, NodeId};
use camconv_core::depth::{confidence_target, normals_from_depth, to_inverse};
use camconv_core::losses::{graph as lg, LossWeights, ScaleTerms};
use camconv_core::{CameraIntrinsics, DepthMap, Grid, Mask, Real};
use camconv_synth::Sample;

use crate::config::NetConfig;
use crate::error::Result;
use crate::forward::{stage_sizes, LevelNodes};
use crate::model::heads_of;

#[derive(Clone, Debug, PartialEq)]
pub struct NormalTarget {
    pub values: Grid<f64>,
    pub mask: Mask,
    pub valid: usize,
}

/// Ground truth at one decoder level, in metric inverse depth.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelTarget {
    pub xi: Grid<f64>,
    pub mask: Mask,
    pub valid: usize,
    pub normals: Option<NormalTarget>,
}

/// A sample prepared for training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainItem {
    pub rgb: Grid<f32>,
    pub cam: CameraIntrinsics,
    /// Coarsest first, matching the decoder levels.
    pub levels: Vec<LevelTarget>,
}

/// Intrinsics of a grid whose pixel `y` averages source rows `[s*y, s*y + s)`.
fn pooled_camera(cam: &CameraIntrinsics, s: usize, h: usize, w: usize) -> Result<CameraIntrinsics> {
    let sf = s as f64;
    let off = (sf - 1.0) / 2.0;
    Ok(CameraIntrinsics::new(cam.f() / sf, (cam.cx() - off) / sf, (cam.cy() - off) / sf, w, h)?)
}

/// Averages valid inverse depth over `s x s` blocks; a block is valid when at least half its pixels are.
fn pool_inverse_depth(xi: &Grid<f64>, mask: &Mask, s: usize, h: usize, w: usize) -> (Grid<f64>, Mask) {
    let (sh, sw) = (xi.height(), xi.width());
    let mut out = Grid::zeros(h, w, 1);
    let mut m = Mask::all_valid(h, w);
    for y in 0..h {
        for x in 0..w {
            let (mut sum, mut n, mut total) = (0.0, 0usize, 0usize);
            for yy in y * s..((y + 1) * s).min(sh) {
                for xx in x * s..((x + 1) * s).min(sw) {
                    total += 1;
                    if mask.get(yy, xx) {
                        sum += xi.get(yy, xx, 0);
                        n += 1;
                    }
                }
            }
            if n > 0 && 2 * n >= total {
                out.set(y, x, 0, sum / n as f64);
            } else {
                m.set(y, x, false);
            }
        }
    }
    (out, m)
}

pub fn level_targets(config: &NetConfig, depth: &DepthMap) -> Result<Vec<LevelTarget>> {
    let inv = to_inverse(depth);
    let sizes = stage_sizes(config, depth.height(), depth.width());
    let l = config.levels;
    let mut out = Vec::with_capacity(l + 1);
    for k in 0..=l {
        let r = l - k;
        let (h, w) = sizes[r];
        let (xi, mask) = pool_inverse_depth(inv.values(), inv.mask(), 1 << r, h, w);
        let valid = mask.count();
        let normals = if heads_of(config, k).has_normals() && valid > 0 {
            let cam = pooled_camera(depth.cam(), 1 << r, h, w)?;
            let d = DepthMap::new(xi.map(|v| if v > 0.0 { 1.0 / v } else { 1.0 }), mask.clone(), cam)?;
            normals_from_depth(&d).ok().map(|n| NormalTarget {
                valid: n.mask().count(),
                values: n.values().clone(),
                mask: n.mask().clone(),
            })
        } else {
            None
        };
        out.push(LevelTarget {
            xi,
            mask,
            valid,
            normals,
        });
    }
    Ok(out)
}

pub fn train_item(config: &NetConfig, sample: &Sample) -> Result<TrainItem> {
    Ok(TrainItem {
        rgb: sample.rgb.clone(),
        cam: *sample.cam(),
        levels: level_targets(config, &sample.depth)?,
    })
}

/// Regression targets in the units of the raw head output.
pub fn head_targets<T: Real>(config: &NetConfig, item: &TrainItem) -> Result<Vec<Grid<T>>> {
    let ratio = if config.use_focal_norm {
        config.focal_normalization()?.ratio(item.cam.f())
    } else {
        1.0
    };
    Ok(item.levels.iter().map(|l| l.xi.map(|v| T::of(v * ratio))).collect())
}

/// Confidence targets `exp(-|ξ - ξ̂|)` from the current predictions, held fixed during backprop.
pub fn confidence_targets<T: Real>(g: &Graph<T>, outs: &[LevelNodes], head: &[Grid<T>]) -> Result<Vec<Grid<T>>> {
    outs.iter()
        .zip(head)
        .map(|(o, t)| Ok(confidence_target(g.value(o.xi), t)?))
        .collect()
}

/// Weighted loss of one sample; every term is averaged over its valid pixels.
pub fn sample_loss<T: Real>(
    g: &mut Graph<T>,
    outs: &[LevelNodes],
    item: &TrainItem,
    head: &[Grid<T>],
    conf: &[Grid<T>],
    weights: &LossWeights,
) -> Result<NodeId> {
    let mut scales = Vec::with_capacity(outs.len());
    for (k, o) in outs.iter().enumerate() {
        let level = &item.levels[k];
        if level.valid == 0 {
            continue;
        }
        let inv = T::of(1.0 / level.valid as f64);
        let d = lg::depth_loss(g, o.xi, &head[k], &level.mask)?;
        let gr = lg::gradient_loss(g, o.xi, &head[k], &level.mask)?;
        let c = lg::confidence_loss(g, o.confidence, &conf[k], &level.mask)?;
        let normal = match (o.normals, &level.normals) {
            (Some(n), Some(t)) if t.valid > 0 => {
                let raw = lg::normal_loss(g, n, &t.values.cast::<T>(), &t.mask)?;
                Some(g.mul_scalar(raw, T::of(1.0 / t.valid as f64))?)
            }
            _ => None,
        };
        scales.push(ScaleTerms {
            depth: g.mul_scalar(d, inv)?,
            gradient: g.mul_scalar(gr, inv)?,
            confidence: g.mul_scalar(c, inv)?,
            normal,
        });
    }
    if scales.is_empty() {
        return Ok(g.constant(Grid::filled(1, 1, 1, T::zero())));
    }
    Ok(lg::total_loss(g, &scales, weights)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> NetConfig {
        NetConfig {
            levels: 2,
            base_channels: 4,
            ..Default::default()
        }
    }

    fn plane(h: usize, w: usize, d: f64) -> DepthMap {
        let cam = CameraIntrinsics::centered(10.0, w, h).unwrap();
        DepthMap::new(Grid::filled(h, w, 1, d), Mask::all_valid(h, w), cam).unwrap()
    }

    #[test]
    fn pyramid_of_a_fronto_parallel_plane() {
        let t = level_targets(&config(), &plane(8, 12, 2.0)).unwrap();
        let shapes: Vec<_> = t.iter().map(|l| l.xi.shape()).collect();
        assert_eq!(shapes, vec![(2, 3, 1), (4, 6, 1), (8, 12, 1)]);
        for l in &t {
            assert!(l.xi.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
            assert_eq!(l.valid, l.xi.len());
        }
        let n = t[0].normals.as_ref().unwrap();
        assert!(t[1].normals.is_none());
        // Border pixels have no central difference; at 2x3 nothing survives.
        assert_eq!(n.valid, 0);
    }

    #[test]
    fn pooling_needs_half_the_block_valid() {
        let xi = Grid::from_vec(2, 2, 1, vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let m = Mask::new(2, 2, vec![true, true, false, false]).unwrap();
        let (p, pm) = pool_inverse_depth(&xi, &m, 2, 1, 1);
        assert_eq!(p.get(0, 0, 0), 2.0);
        assert!(pm.get(0, 0));
        let m = Mask::new(2, 2, vec![true, false, false, false]).unwrap();
        assert!(!pool_inverse_depth(&xi, &m, 2, 1, 1).1.get(0, 0));
    }

    #[test]
    fn pooled_camera_keeps_rays() {
        let cam = CameraIntrinsics::new(20.0, 15.5, 11.5, 32, 24).unwrap();
        let c = pooled_camera(&cam, 4, 6, 8).unwrap();
        // Pooled pixel 0 is centered on source coordinate 1.5.
        let a = cam.backproject(1.5, 1.5, 1.0);
        let b = c.backproject(0.0, 0.0, 1.0);
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn head_targets_apply_focal_ratio() {
        let cfg = NetConfig {
            use_focal_norm: true,
            f_n: 20.0,
            ..config()
        };
        let item = TrainItem {
            rgb: Grid::zeros(8, 12, 3),
            cam: *plane(8, 12, 2.0).cam(),
            levels: level_targets(&cfg, &plane(8, 12, 2.0)).unwrap(),
        };
        let t = head_targets::<f64>(&cfg, &item).unwrap();
        assert!(t[2].data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }
}
