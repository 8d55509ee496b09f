//! Weight-shared training over one or more sensor sizes.

use camconv_core::autodiff::check::{check_gradients, GradCheckOptions, GradCheckReport};
use camconv_core::autodiff::Graph;
use camconv_core::losses::LossWeights;
use camconv_core::Grid;
use camconv_synth::{load_dataset, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{AdamConfig, NetConfig, TrainConfig};
use crate::error::{NetError, Result};
use crate::forward::{build_graph, ParamNodes};
use crate::model::{build, ModelParams};
use crate::targets::{confidence_targets, head_targets, sample_loss, train_item, TrainItem};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean batch loss per iteration.
    pub loss_curve: Vec<f64>,
}

/// Loss of one item and its gradient for every parameter tensor, in `f32`.
pub fn loss_and_grads(params: &ModelParams, item: &TrainItem, weights: &LossWeights) -> Result<(f64, Vec<Grid<f32>>)> {
    let mut g = Graph::<f32>::new();
    let p = ParamNodes::bind(&mut g, params, true);
    let ids: Vec<_> = params.tensors().iter().map(|(n, _)| n.clone()).collect();
    let x = g.constant(item.rgb.clone());
    let outs = build_graph(&mut g, &p, &params.config, x, &item.cam)?;
    let head = head_targets::<f32>(&params.config, item)?;
    let conf = confidence_targets(&g, &outs, &head)?;
    let loss = sample_loss(&mut g, &outs, item, &head, &conf, weights)?;
    let value = g.value(loss).data()[0] as f64;
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    g.backward(loss)?;
    let grads = params
        .tensors()
        .iter()
        .zip(&ids)
        .map(|((_, t), name)| {
            let node = p.node(name)?;
            Ok(g.grad(node).cloned().unwrap_or_else(|| {
                let (h, w, c) = t.shape();
                Grid::zeros(h, w, c)
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((value, grads))
}

/// Adam moments for every parameter tensor.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    lr: f64,
    step: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(params: &ModelParams, cfg: AdamConfig, lr: f64) -> Self {
        let zeros: Vec<Vec<f32>> = params.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            cfg,
            lr,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, params: &mut ModelParams, grads: &[Grid<f32>]) {
        self.step += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let step = (self.lr * c2.sqrt() / c1) as f32;
        let eps = (self.cfg.eps * c2.sqrt()) as f32;
        let (b1, b2) = (b1 as f32, b2 as f32);
        for (((t, g), m), v) in params.tensors_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((w, &gi), mi), vi) in t.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                *w -= step * *mi / (vi.sqrt() + eps);
            }
        }
    }
}

/// Groups item indices by sensor size, in `group` order or first appearance.
fn sensor_groups(items: &[TrainItem], group: &[[usize; 2]]) -> Result<Vec<Vec<usize>>> {
    let mut sizes: Vec<[usize; 2]> = group.to_vec();
    if sizes.is_empty() {
        for it in items {
            let s = [it.cam.width(), it.cam.height()];
            if !sizes.contains(&s) {
                sizes.push(s);
            }
        }
    }
    let groups: Vec<Vec<usize>> = sizes
        .iter()
        .map(|s| {
            (0..items.len())
                .filter(|&i| [items[i].cam.width(), items[i].cam.height()] == *s)
                .collect()
        })
        .collect();
    if let Some(k) = groups.iter().position(Vec::is_empty) {
        return Err(NetError::TrainConfig(format!(
            "sensor size {}x{} has no training samples",
            sizes[k][0], sizes[k][1]
        )));
    }
    Ok(groups)
}

/// Trains on in-memory samples; one sensor size per step, cycling through the group.
pub fn train_on_samples(cfg: &TrainConfig, net: &NetConfig, samples: &[Sample]) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut params = build(net)?;
    if samples.is_empty() {
        return Err(NetError::TrainConfig("no training samples".into()));
    }
    let items = samples.iter().map(|s| train_item(net, s)).collect::<Result<Vec<_>>>()?;
    let groups = sensor_groups(&items, &cfg.sensor_group)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&params, cfg.adam, cfg.learning_rate);
    let mut curve = Vec::with_capacity(cfg.iterations);
    let scale = 1.0 / cfg.batch_size as f32;
    for iteration in 0..cfg.iterations {
        let pool = &groups[iteration % groups.len()];
        let mut total = 0.0;
        let mut acc: Option<Vec<Grid<f32>>> = None;
        for _ in 0..cfg.batch_size {
            let item = &items[pool[rng.gen_range(0..pool.len())]];
            let (loss, grads) = loss_and_grads(&params, item, &cfg.loss_weights)?;
            if !loss.is_finite() {
                return Err(NetError::Diverged { iteration });
            }
            total += loss;
            match acc.as_mut() {
                None => acc = Some(grads),
                Some(a) => {
                    for (x, y) in a.iter_mut().zip(&grads) {
                        for (p, q) in x.data_mut().iter_mut().zip(y.data()) {
                            *p += q;
                        }
                    }
                }
            }
        }
        let mut grads = acc.expect("batch_size >= 1");
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
        if grads.iter().any(|g| !g.all_finite()) {
            return Err(NetError::Diverged { iteration });
        }
        adam.update(&mut params, &grads);
        curve.push(total / cfg.batch_size as f64);
    }
    if !params.all_finite() {
        return Err(NetError::Diverged {
            iteration: cfg.iterations,
        });
    }
    Ok(TrainOutcome {
        params,
        loss_curve: curve,
    })
}

/// Loads `cfg.datasets` and trains on all of their samples.
pub fn train(cfg: &TrainConfig, net: &NetConfig) -> Result<TrainOutcome> {
    if cfg.datasets.is_empty() {
        return Err(NetError::TrainConfig("no datasets listed".into()));
    }
    let mut samples = Vec::new();
    for dir in &cfg.datasets {
        samples.extend(load_dataset(dir)?.samples);
    }
    train_on_samples(cfg, net, &samples)
}

/// Central differences at step `1e-5` with kink probes skipped.
///
/// The loss is O(100), so `f64` rounding leaves about `1e-9` of noise in each
/// difference quotient; entries smaller than the floor are compared absolutely.
pub fn network_check_options() -> GradCheckOptions {
    GradCheckOptions {
        step: 1e-5,
        floor: 1e-4,
        max_entries: None,
        skip_kinks: true,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkGradCheck {
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub checked: usize,
    pub skipped: usize,
}

/// Central-difference check of the full training loss against every parameter tensor, in `f64`.
///
/// Confidence targets are computed once at `params` and then held fixed, which
/// is the function the analytic gradient differentiates.
pub fn check_network_gradients(
    params: &ModelParams,
    item: &TrainItem,
    weights: &LossWeights,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let config = params.config.clone();
    let head = head_targets::<f64>(&config, item)?;
    let conf = {
        let mut g = Graph::<f64>::new();
        let p = ParamNodes::bind(&mut g, params, false);
        let x = g.constant(item.rgb.cast::<f64>());
        let outs = build_graph(&mut g, &p, &config, x, &item.cam)?;
        confidence_targets(&g, &outs, &head)?
    };
    let inputs: Vec<(String, Grid<f64>)> = params.tensors().iter().map(|(n, t)| (n.clone(), t.cast::<f64>())).collect();
    let names: Vec<String> = inputs.iter().map(|(n, _)| n.clone()).collect();
    let rgb = item.rgb.cast::<f64>();
    let report = check_gradients(
        &inputs,
        |g, ids| {
            let p = ParamNodes::new(names.iter().cloned(), ids.iter().copied());
            let x = g.constant(rgb.clone());
            let outs = build_graph(g, &p, &config, x, &item.cam).map_err(to_core)?;
            sample_loss(g, &outs, item, &head, &conf, weights).map_err(to_core)
        },
        opts,
    )?;
    Ok(report)
}

fn to_core(e: NetError) -> camconv_core::Error {
    match e {
        NetError::Core(c) => c,
        other => camconv_core::Error::Graph(other.to_string()),
    }
}

pub fn summarize(report: &GradCheckReport) -> NetworkGradCheck {
    let worst = report
        .tensors
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .map(|t| t.name.clone())
        .unwrap_or_default();
    NetworkGradCheck {
        max_rel_error: report.max_rel_error(),
        worst_tensor: worst,
        checked: report.tensors.iter().map(|t| t.checked).sum(),
        skipped: report.tensors.iter().map(|t| t.skipped).sum(),
    }
}
