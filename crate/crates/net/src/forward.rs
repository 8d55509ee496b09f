use std::collections::HashMap;

use camconv_core::autodiff::conv::Padding;
use camconv_core::autodiff::{Graph, NodeId};
use camconv_core::maps::{make_stack, STACK_CHANNELS};
use camconv_core::{CameraIntrinsics, DepthMap, FocalNormalization, Grid, Mask, Real};
use camconv_synth::Sample;

use crate::config::NetConfig;
use crate::error::{NetError, Result};
use crate::model::{heads_of, ModelParams};

/// Lower bound added to the softplus inverse-depth head.
pub const XI_FLOOR: f64 = 1e-4;
const NORMAL_EPS: f64 = 1e-12;

/// Graph nodes bound to parameter tensors by name.
pub struct ParamNodes {
    ids: HashMap<String, NodeId>,
}

impl ParamNodes {
    pub fn new(names: impl IntoIterator<Item = String>, ids: impl IntoIterator<Item = NodeId>) -> Self {
        Self {
            ids: names.into_iter().zip(ids).collect(),
        }
    }

    /// Binds every tensor of `params`, trainable or constant.
    pub fn bind<T: Real>(g: &mut Graph<T>, params: &ModelParams, trainable: bool) -> Self {
        let ids: Vec<NodeId> = params
            .tensors()
            .iter()
            .map(|(_, t)| {
                let v = t.cast::<T>();
                if trainable {
                    g.param(v)
                } else {
                    g.constant(v)
                }
            })
            .collect();
        Self::new(params.tensors().iter().map(|(n, _)| n.clone()), ids)
    }

    pub fn node(&self, name: &str) -> Result<NodeId> {
        self.get(name)
    }

    fn get(&self, name: &str) -> Result<NodeId> {
        self.ids.get(name).copied().ok_or_else(|| NetError::MissingTensor(name.to_string()))
    }
}

/// Head outputs of one decoder level.
#[derive(Clone, Copy, Debug)]
pub struct LevelNodes {
    /// Raw inverse depth: normalized to `f_n` when focal normalization is on.
    pub xi: NodeId,
    pub confidence: NodeId,
    pub normals: Option<NodeId>,
}

/// Spatial sizes of encoder stages `0..=levels`.
pub fn stage_sizes(config: &NetConfig, h: usize, w: usize) -> Vec<(usize, usize)> {
    let mut out = vec![(h, w)];
    for _ in 0..config.levels {
        let (ph, pw) = *out.last().expect("nonempty");
        out.push((ph.div_ceil(2), pw.div_ceil(2)));
    }
    out
}

/// Checks an input against the model; inputs must be at least `2^levels` pixels per side.
pub fn check_input(config: &NetConfig, rgb_shape: (usize, usize, usize), cam: &CameraIntrinsics) -> Result<()> {
    let (h, w, c) = rgb_shape;
    let shape_err = |reason: String| NetError::Shape {
        got_w: w,
        got_h: h,
        reason,
    };
    if c != 3 {
        return Err(shape_err(format!("{c} input channels, expected 3")));
    }
    if cam.width() != w || cam.height() != h {
        return Err(shape_err(format!("camera is {}x{}", cam.width(), cam.height())));
    }
    let min = 1usize << config.levels;
    if h < min || w < min {
        return Err(shape_err(format!("each side must be at least {min} pixels")));
    }
    Ok(())
}

fn conv<T: Real>(g: &mut Graph<T>, p: &ParamNodes, layer: &str, x: NodeId, stride: usize) -> Result<NodeId> {
    let k = p.get(&format!("{layer}.w"))?;
    let b = p.get(&format!("{layer}.b"))?;
    Ok(g.conv2d(x, k, Some(b), stride, Padding::Same)?)
}

fn conv_relu<T: Real>(g: &mut Graph<T>, p: &ParamNodes, layer: &str, x: NodeId, stride: usize) -> Result<NodeId> {
    let y = conv(g, p, layer, x, stride)?;
    Ok(g.relu(y)?)
}

/// Adds the camera channel stack at `(h, w)` to `x` when CAM-Convs are enabled.
/// Factor applied to the pixel-valued cc channels before they enter a convolution.
///
/// Dividing by `f_n` brings them to the range of the fov and nc channels.
pub fn cc_scale(config: &NetConfig) -> f64 {
    1.0 / config.f_n
}

fn with_camera<T: Real>(
    g: &mut Graph<T>,
    config: &NetConfig,
    cam: &CameraIntrinsics,
    x: NodeId,
    (h, w): (usize, usize),
) -> Result<NodeId> {
    if !config.use_camconvs {
        return Ok(x);
    }
    let mut grid = make_stack(cam, h, w).to_grid::<T>();
    let scale = T::of(cc_scale(config));
    for px in grid.data_mut().chunks_exact_mut(STACK_CHANNELS) {
        px[0] = px[0] * scale;
        px[1] = px[1] * scale;
    }
    let stack = g.constant(grid);
    Ok(g.concat_channels(&[x, stack])?)
}

fn heads<T: Real>(g: &mut Graph<T>, p: &ParamNodes, config: &NetConfig, level: usize, d: NodeId) -> Result<LevelNodes> {
    let z = conv(g, p, &format!("head{level}.xi"), d, 1)?;
    let s = g.softplus(z)?;
    let xi = g.add_scalar(s, T::of(XI_FLOOR))?;
    let c = conv(g, p, &format!("head{level}.conf"), d, 1)?;
    let confidence = g.sigmoid(c)?;
    let normals = if heads_of(config, level).has_normals() {
        let n = conv(g, p, &format!("head{level}.normal"), d, 1)?;
        Some(g.normalize_channels(n, T::of(NORMAL_EPS))?)
    } else {
        None
    };
    Ok(LevelNodes { xi, confidence, normals })
}

/// Builds the network on `g`; levels are returned coarsest first.
pub fn build_graph<T: Real>(
    g: &mut Graph<T>,
    p: &ParamNodes,
    config: &NetConfig,
    rgb: NodeId,
    cam: &CameraIntrinsics,
) -> Result<Vec<LevelNodes>> {
    check_input(config, g.value(rgb).shape(), cam)?;
    let (h, w, _) = g.value(rgb).shape();
    let sizes = stage_sizes(config, h, w);
    let l = config.levels;
    let mut enc = vec![rgb];
    for k in 1..=l {
        let x = conv_relu(g, p, &format!("enc{k}"), enc[k - 1], 2)?;
        enc.push(x);
    }
    let b_in = with_camera(g, config, cam, enc[l], sizes[l])?;
    let mut d = conv_relu(g, p, "bottleneck", b_in, 1)?;
    let mut out = vec![heads(g, p, config, 0, d)?];
    for k in 1..=l {
        let r = l - k;
        let (hr, wr) = sizes[r];
        let up = g.upsample_bilinear(d, hr, wr)?;
        let up = conv_relu(g, p, &format!("up{k}"), up, 1)?;
        let s_in = with_camera(g, config, cam, enc[r], sizes[r])?;
        let skip = conv_relu(g, p, &format!("skip{k}"), s_in, 1)?;
        let prev = out[k - 1];
        let xi_up = g.upsample_bilinear(prev.xi, hr, wr)?;
        let c_up = g.upsample_bilinear(prev.confidence, hr, wr)?;
        let fused = g.concat_channels(&[up, skip, xi_up, c_up])?;
        d = conv_relu(g, p, &format!("fuse{k}"), fused, 1)?;
        out.push(heads(g, p, config, k, d)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelPrediction {
    /// Raw head output, normalized when focal normalization is on.
    pub xi: Grid<f32>,
    pub confidence: Grid<f32>,
    pub normals: Option<Grid<f32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Coarsest first.
    pub levels: Vec<LevelPrediction>,
    pub cam: CameraIntrinsics,
    pub normalization: Option<FocalNormalization>,
}

impl Prediction {
    pub fn finest(&self) -> &LevelPrediction {
        self.levels.last().expect("at least two levels")
    }

    /// Metric inverse depth of `level`, undoing focal normalization with the input camera.
    pub fn metric_inverse_depth(&self, level: usize) -> Grid<f64> {
        let xi = self.levels[level].xi.cast::<f64>();
        match &self.normalization {
            None => xi,
            Some(n) => xi.map(|v| n.denormalize_value(self.cam.f(), v)),
        }
    }
}

/// Evaluates the network in `f32`.
pub fn forward(params: &ModelParams, rgb: &Grid<f32>, cam: &CameraIntrinsics) -> Result<Prediction> {
    let mut g = Graph::<f32>::new();
    let p = ParamNodes::bind(&mut g, params, false);
    let x = g.constant(rgb.clone());
    let nodes = build_graph(&mut g, &p, &params.config, x, cam)?;
    let levels = nodes
        .iter()
        .map(|n| LevelPrediction {
            xi: g.value(n.xi).clone(),
            confidence: g.value(n.confidence).clone(),
            normals: n.normals.map(|id| g.value(id).clone()),
        })
        .collect();
    let normalization = if params.config.use_focal_norm {
        Some(params.config.focal_normalization()?)
    } else {
        None
    };
    Ok(Prediction {
        levels,
        cam: *cam,
        normalization,
    })
}

/// Metric depth at full resolution.
pub fn predict_depth(params: &ModelParams, sample: &Sample) -> Result<DepthMap> {
    let pred = forward(params, &sample.rgb, sample.cam())?;
    let xi = pred.metric_inverse_depth(params.config.levels);
    let depth = xi.map(|v| 1.0 / v);
    let (h, w, _) = depth.shape();
    let mask = Mask::from_fn(h, w, |y, x| {
        let d = depth.get(y, x, 0);
        d.is_finite() && d > 0.0
    });
    Ok(DepthMap::new(depth, mask, *sample.cam())?)
}
