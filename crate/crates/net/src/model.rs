//! Layer layout and parameter storage.
//!
//! With `L` levels and base width `b`, encoder stage `k` halves the
//! resolution and has `b * 2^(k-1)` channels. Decoder level `k` (0 is the
//! bottleneck) runs at the resolution of encoder stage `L - k`. When camera
//! channels are enabled they enter right after the encoder: at the bottleneck
//! block and at every skip block.

use camconv_core::maps::STACK_CHANNELS;
use camconv_core::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Heads, NetConfig};
use crate::error::{NetError, Result};

/// Inverse-depth head bias at initialization; `softplus(-1) ≈ 0.31`.
const XI_BIAS_INIT: f32 = -1.0;
const HEAD_INIT_GAIN: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerRole {
    Encoder,
    /// Takes camera channels when they are enabled.
    CamBlock,
    Decoder,
    Head,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub role: LayerRole,
    pub kernel: usize,
    pub cin: usize,
    pub cout: usize,
}

impl LayerSpec {
    pub fn weight_name(&self) -> String {
        format!("{}.w", self.name)
    }
    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }
    pub fn parameter_count(&self) -> usize {
        self.kernel * self.kernel * self.cin * self.cout + self.cout
    }
}

/// Channels of encoder stage `k`; stage 0 is the RGB input.
pub fn encoder_channels(config: &NetConfig, k: usize) -> usize {
    if k == 0 {
        3
    } else {
        config.base_channels << (k - 1)
    }
}

/// Channels of decoder level `k`.
pub fn decoder_channels(config: &NetConfig, k: usize) -> usize {
    let r = config.levels - k;
    if r >= 1 {
        encoder_channels(config, r)
    } else {
        (config.base_channels / 2).max(2)
    }
}

pub fn layer_plan(config: &NetConfig) -> Vec<LayerSpec> {
    let l = config.levels;
    let cam = if config.use_camconvs { STACK_CHANNELS } else { 0 };
    let spec = |name: String, role, cin, cout| LayerSpec {
        name,
        role,
        kernel: 3,
        cin,
        cout,
    };
    let mut out = Vec::new();
    for k in 1..=l {
        out.push(spec(
            format!("enc{k}"),
            LayerRole::Encoder,
            encoder_channels(config, k - 1),
            encoder_channels(config, k),
        ));
    }
    out.push(spec(
        "bottleneck".into(),
        LayerRole::CamBlock,
        encoder_channels(config, l) + cam,
        encoder_channels(config, l),
    ));
    for k in 1..=l {
        let dc = decoder_channels(config, k);
        out.push(spec(format!("up{k}"), LayerRole::Decoder, decoder_channels(config, k - 1), dc));
        out.push(spec(format!("skip{k}"), LayerRole::CamBlock, encoder_channels(config, l - k) + cam, dc));
        out.push(spec(format!("fuse{k}"), LayerRole::Decoder, 2 * dc + 2, dc));
    }
    for (k, heads) in config.resolved_heads().iter().enumerate() {
        let dc = decoder_channels(config, k);
        out.push(spec(format!("head{k}.xi"), LayerRole::Head, dc, 1));
        out.push(spec(format!("head{k}.conf"), LayerRole::Head, dc, 1));
        if heads.has_normals() {
            out.push(spec(format!("head{k}.normal"), LayerRole::Head, dc, 3));
        }
    }
    out
}

/// Named parameter tensors in layer order, each kernel followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: NetConfig,
    tensors: Vec<(String, Grid<f32>)>,
}

impl ModelParams {
    /// Wraps tensors after checking them against the layout of `config`.
    pub fn from_tensors(config: NetConfig, tensors: Vec<(String, Grid<f32>)>) -> Result<Self> {
        config.validate()?;
        let expected = expected_shapes(&config);
        if expected.len() != tensors.len() {
            return Err(NetError::Config(format!(
                "{} tensors given, layout needs {}",
                tensors.len(),
                expected.len()
            )));
        }
        for ((name, shape), (got_name, grid)) in expected.iter().zip(&tensors) {
            if name != got_name || *shape != grid.shape() {
                return Err(NetError::Config(format!(
                    "tensor `{got_name}` {:?} where `{name}` {shape:?} was expected",
                    grid.shape()
                )));
            }
            if !grid.all_finite() {
                return Err(NetError::Config(format!("tensor `{name}` has non-finite values")));
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn tensors(&self) -> &[(String, Grid<f32>)] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Grid<f32>> {
        self.tensors.iter_mut().map(|(_, g)| g)
    }

    pub fn get(&self, name: &str) -> Option<&Grid<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, g)| g)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|(_, g)| g.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|(_, g)| g.all_finite())
    }
}

fn expected_shapes(config: &NetConfig) -> Vec<(String, (usize, usize, usize))> {
    layer_plan(config)
        .iter()
        .flat_map(|l| {
            [
                (l.weight_name(), (l.kernel, l.kernel, l.cin * l.cout)),
                (l.bias_name(), (1, 1, l.cout)),
            ]
        })
        .collect()
}

/// Seed-deterministic initialization: He-uniform kernels, damped heads, zero biases.
pub fn build(config: &NetConfig) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tensors = Vec::new();
    for layer in layer_plan(config) {
        let fan_in = (layer.kernel * layer.kernel * layer.cin) as f64;
        let gain = if layer.role == LayerRole::Head { HEAD_INIT_GAIN } else { 1.0 };
        let a = gain * (6.0 / fan_in).sqrt();
        let n = layer.kernel * layer.kernel * layer.cin * layer.cout;
        let data: Vec<f32> = (0..n).map(|_| rng.gen_range(-a..a) as f32).collect();
        let w = Grid::from_vec(layer.kernel, layer.kernel, layer.cin * layer.cout, data)?;
        let bias = if layer.name.ends_with(".xi") { XI_BIAS_INIT } else { 0.0 };
        let b = Grid::filled(1, 1, layer.cout, bias);
        tensors.push((layer.weight_name(), w));
        tensors.push((layer.bias_name(), b));
    }
    ModelParams::from_tensors(config.clone(), tensors)
}

/// Count of kernel weights fed by camera channels.
pub fn camconv_weight_count(config: &NetConfig) -> usize {
    layer_plan(config)
        .iter()
        .filter(|l| l.role == LayerRole::CamBlock)
        .map(|l| l.kernel * l.kernel * STACK_CHANNELS * l.cout)
        .sum()
}

pub fn heads_of(config: &NetConfig, level: usize) -> Heads {
    config.resolved_heads()[level]
}
