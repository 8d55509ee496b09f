//! Finite-difference checks of every graph primitive, every loss and, on
//! request, the whole network.

use camconv_core::autodiff::check::{check_gradients, GradCheckOptions, GradCheckReport};
use camconv_core::autodiff::{Graph, NodeId, Padding};
use camconv_core::losses::{graph as lg, LossWeights, ScaleTerms};
use camconv_core::{Grid, Mask};
use camconv_net::{
    build, check_network_gradients, network_check_options, train_item, train_on_samples, ModelParams, NetConfig,
    TrainConfig,
};
use camconv_synth::{generate_samples, DatasetSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;

pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteEntry {
    pub group: &'static str,
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SuiteReport {
    pub entries: Vec<SuiteEntry>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    fn push(&mut self, group: &'static str, name: impl Into<String>, r: &GradCheckReport) {
        let checked = r.tensors.iter().map(|t| t.checked).sum();
        let skipped = r.tensors.iter().map(|t| t.skipped).sum();
        let max_rel_error = r.max_rel_error();
        self.entries.push(SuiteEntry {
            group,
            name: name.into(),
            max_rel_error,
            checked,
            skipped,
            // A check that probed nothing proves nothing.
            passed: max_rel_error < TOLERANCE && checked > 0,
        });
    }
}

/// Uniform values in `[lo, hi)` at least `1e-3` away from zero.
fn away_from_zero(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, lo: f64, hi: f64) -> Grid<f64> {
    Grid::from_fn(h, w, c, |_, _, _| loop {
        let v = rng.gen_range(lo..hi);
        if v.abs() >= 1e-3 {
            break v;
        }
    })
}

/// `sum(node * probe)` with a fixed random probe.
fn probe_sum(g: &mut Graph<f64>, node: NodeId, seed: u64) -> camconv_core::Result<NodeId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w, c) = g.value(node).shape();
    let probe = g.constant(away_from_zero(&mut rng, h, w, c, -1.0, 1.0));
    let m = g.mul(node, probe)?;
    g.sum_all(m)
}

type Unary = fn(&mut Graph<f64>, NodeId) -> camconv_core::Result<NodeId>;
type Binary = fn(&mut Graph<f64>, NodeId, NodeId) -> camconv_core::Result<NodeId>;

pub fn check_primitives(report: &mut SuiteReport) -> Result<()> {
    let opts = GradCheckOptions::default();
    let unary: [(&str, f64, f64, Unary); 15] = [
        ("relu", -2.0, 2.0, |g, x| g.relu(x)),
        ("sigmoid", -4.0, 4.0, |g, x| g.sigmoid(x)),
        ("softplus", -4.0, 4.0, |g, x| g.softplus(x)),
        ("exp", -2.0, 2.0, |g, x| g.exp(x)),
        ("log", 0.1, 3.0, |g, x| g.log(x)),
        ("abs", -2.0, 2.0, |g, x| g.abs(x)),
        ("square", -2.0, 2.0, |g, x| g.square(x)),
        ("sqrt", 0.1, 3.0, |g, x| g.sqrt(x)),
        ("mul_scalar", -2.0, 2.0, |g, x| g.mul_scalar(x, -1.7)),
        ("add_scalar", -2.0, 2.0, |g, x| g.add_scalar(x, 0.3)),
        ("sum_all", -2.0, 2.0, |g, x| g.sum_all(x)),
        ("upsample_x2", -2.0, 2.0, |g, x| g.upsample_bilinear_x2(x)),
        ("upsample_7x5", -2.0, 2.0, |g, x| g.upsample_bilinear(x, 7, 5)),
        ("downsample_3x2", -2.0, 2.0, |g, x| g.upsample_bilinear(x, 3, 2)),
        ("normalize_channels", -2.0, 2.0, |g, x| g.normalize_channels(x, 1e-8)),
    ];
    for (k, (name, lo, hi, op)) in unary.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let channels = if name == "normalize_channels" { 3 } else { 1 };
        let x = away_from_zero(&mut rng, 4, 4, channels, lo, hi);
        let r = check_gradients(
            &[("x".into(), x)],
            |g, ids| {
                let y = op(g, ids[0])?;
                probe_sum(g, y, 1)
            },
            &opts,
        )?;
        report.push("primitive", name, &r);
    }
    let binary: [(&str, Binary); 5] = [
        ("add", |g, a, b| g.add(a, b)),
        ("sub", |g, a, b| g.sub(a, b)),
        ("mul", |g, a, b| g.mul(a, b)),
        ("concat_channels", |g, a, b| g.concat_channels(&[a, b])),
        ("sum_scalars", |g, a, b| {
            let sa = g.sum_all(a)?;
            let sb = g.sum_all(b)?;
            let sq = g.square(sb)?;
            g.sum_scalars(&[sa, sq])
        }),
    ];
    for (k, (name, op)) in binary.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + k as u64);
        let a = away_from_zero(&mut rng, 4, 4, 2, -2.0, 2.0);
        let b = away_from_zero(&mut rng, 4, 4, 2, -2.0, 2.0);
        let r = check_gradients(
            &[("a".into(), a), ("b".into(), b)],
            |g, ids| {
                let y = op(g, ids[0], ids[1])?;
                probe_sum(g, y, 2)
            },
            &opts,
        )?;
        report.push("primitive", name, &r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for stride in [1, 2] {
        for padding in [Padding::Same, Padding::Valid] {
            let x = away_from_zero(&mut rng, 5, 6, 2, -1.0, 1.0);
            let k = away_from_zero(&mut rng, 3, 3, 2 * 3, -1.0, 1.0);
            let b = away_from_zero(&mut rng, 1, 1, 3, -1.0, 1.0);
            let r = check_gradients(
                &[("x".into(), x), ("kernel".into(), k), ("bias".into(), b)],
                |g, ids| {
                    let y = g.conv2d(ids[0], ids[1], Some(ids[2]), stride, padding)?;
                    probe_sum(g, y, 3)
                },
                &opts,
            )?;
            report.push("primitive", format!("conv2d stride {stride} {padding:?}"), &r);
        }
    }
    Ok(())
}

pub fn check_losses(report: &mut SuiteReport) -> Result<()> {
    let opts = GradCheckOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let (h, w) = (10, 12);
    let mask = Mask::from_fn(h, w, |_, _| rng.gen_bool(0.85));
    let target = Grid::from_fn(h, w, 1, |_, _, _| rng.gen_range(0.2..3.0));
    // |pred - target| stays clear of the L1 kink.
    let pred = Grid::from_fn(h, w, 1, |y, x, _| {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        target.get(y, x, 0) + sign * rng.gen_range(0.01..0.15)
    });
    let normals_pred = Grid::from_fn(h, w, 3, |_, _, _| rng.gen_range(-1.0..1.0));
    let normals_target = Grid::from_fn(h, w, 3, |_, _, _| rng.gen_range(-1.0..1.0));
    let conf_target = Grid::from_fn(h, w, 1, |_, _, _| rng.gen_range(0.05..0.95));
    let conf_pred = Grid::from_fn(h, w, 1, |y, x, _| conf_target.get(y, x, 0) + rng.gen_range(0.01..0.04));
    let single = |name: &str, g: Grid<f64>| vec![(name.to_string(), g)];

    let r = check_gradients(&single("xi", pred.clone()), |g, ids| lg::depth_loss(g, ids[0], &target, &mask), &opts)?;
    report.push("loss", "depth", &r);
    let r = check_gradients(&single("xi", pred.clone()), |g, ids| lg::gradient_loss(g, ids[0], &target, &mask), &opts)?;
    report.push("loss", "scale-invariant gradient", &r);
    let r = check_gradients(
        &single("confidence", conf_pred.clone()),
        |g, ids| lg::confidence_loss(g, ids[0], &conf_target, &mask),
        &opts,
    )?;
    report.push("loss", "confidence", &r);
    let r = check_gradients(
        &single("normals", normals_pred.clone()),
        |g, ids| lg::normal_loss(g, ids[0], &normals_target, &mask),
        &opts,
    )?;
    report.push("loss", "normal", &r);
    let r = check_gradients(
        &single("xi", pred.clone()),
        |g, ids| lg::eigen_scale_invariant_loss(g, ids[0], &target, &mask),
        &opts,
    )?;
    report.push("loss", "eigen scale-invariant", &r);
    let r = check_gradients(
        &[
            ("xi".into(), pred),
            ("confidence".into(), conf_pred),
            ("normals".into(), normals_pred),
        ],
        |g, ids| {
            let terms = ScaleTerms {
                depth: lg::depth_loss(g, ids[0], &target, &mask)?,
                gradient: lg::gradient_loss(g, ids[0], &target, &mask)?,
                confidence: lg::confidence_loss(g, ids[1], &conf_target, &mask)?,
                normal: Some(lg::normal_loss(g, ids[2], &normals_target, &mask)?),
            };
            lg::total_loss(g, &[terms], &LossWeights::default())
        },
        &opts,
    )?;
    report.push("loss", "weighted total", &r);
    Ok(())
}

/// Moves every bias off zero so no unit of the freshly built net sits exactly on a ReLU kink.
pub fn jitter_biases(params: &mut ModelParams) {
    let is_bias: Vec<bool> = params.tensors().iter().map(|(n, _)| n.ends_with(".b")).collect();
    let mut k = 0u32;
    for (t, bias) in params.tensors_mut().zip(is_bias) {
        if bias {
            for v in t.data_mut() {
                k += 1;
                *v += 0.05 + 0.01 * (k % 7) as f32;
            }
        }
    }
}

fn tiny_net(cam: bool, norm: bool) -> NetConfig {
    NetConfig {
        levels: 2,
        base_channels: 4,
        use_camconvs: cam,
        use_focal_norm: norm,
        f_n: 6.0,
        seed: 11,
        ..Default::default()
    }
}

/// Full training loss of a small network on a 16x16 synthetic image.
pub fn check_network(report: &mut SuiteReport) -> Result<()> {
    let samples = generate_samples(&DatasetSpec {
        name: "gradcheck".into(),
        camera: "s3·f64".into(),
        scene_seeds: [4, 6],
        views_per_scene: 1,
        resolution_scale: 1.0 / 14.0,
        seed: 3,
        augmentation: None,
    })?;
    let weights = LossWeights::default();
    let opts = network_check_options();
    for (cam, norm, label) in [(false, false, "plain"), (true, true, "camconvs+focalnorm")] {
        let cfg = tiny_net(cam, norm);
        let mut params = build(&cfg)?;
        jitter_biases(&mut params);
        let item = train_item(&cfg, &samples[0])?;
        let r = check_network_gradients(&params, &item, &weights, &opts)?;
        report.push("network", format!("{label} at initialization"), &r);
    }
    let cfg = tiny_net(true, true);
    let train = TrainConfig {
        iterations: 10,
        batch_size: 2,
        ..Default::default()
    };
    let params = train_on_samples(&train, &cfg, &samples)?.params;
    let item = train_item(&cfg, &samples[1])?;
    let r = check_network_gradients(&params, &item, &weights, &opts)?;
    report.push("network", "camconvs+focalnorm after 10 steps", &r);
    Ok(())
}

/// Primitive and loss checks; `full` adds the network.
pub fn run_suite(full: bool) -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    check_primitives(&mut report)?;
    check_losses(&mut report)?;
    if full {
        check_network(&mut report)?;
    }
    Ok(report)
}
