//! Central finite-difference checks of analytic gradients in `f64`.

use serde::Serialize;

use super::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Lower bound on the denominator of the relative error.
    pub floor: f64,
    /// Entries probed per tensor; `None` probes all of them.
    pub max_entries: Option<usize>,
    /// Skip probes whose perturbation flips the sign of any ReLU input.
    pub skip_kinks: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-6,
            max_entries: None,
            skip_kinks: true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    /// Probes skipped because they straddle a ReLU kink.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.tensors.iter().all(|t| t.max_rel_error < tolerance)
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn probe_indices(len: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(k) if k < len => (0..k).map(|i| i * len / k).collect(),
        _ => (0..len).collect(),
    }
}

fn evaluate<F>(inputs: &[(String, Grid<f64>)], build: &F) -> Result<(f64, Vec<bool>)>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|(_, v)| g.param(v.clone())).collect();
    let root = build(&mut g, &ids)?;
    let value = g
        .value(root)
        .scalar()
        .ok_or_else(|| Error::Graph("gradient check needs a scalar output".into()))?;
    Ok((value, g.relu_signature()))
}

/// Compares the analytic gradient of `build` with central differences for every named input.
pub fn check_gradients<F>(
    inputs: &[(String, Grid<f64>)],
    build: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|(_, v)| g.param(v.clone())).collect();
    let root = build(&mut g, &ids)?;
    g.backward(root)?;
    let signature = g.relu_signature();
    let mut work: Vec<(String, Grid<f64>)> = inputs.to_vec();
    let mut report = GradCheckReport::default();
    for (k, id) in ids.iter().enumerate() {
        let (h, w, c) = inputs[k].1.shape();
        let analytic = g.grad(*id).cloned().unwrap_or_else(|| Grid::zeros(h, w, c));
        let mut t = TensorCheck {
            name: inputs[k].0.clone(),
            checked: 0,
            skipped: 0,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in probe_indices(analytic.len(), opts.max_entries) {
            let orig = work[k].1.data()[i];
            work[k].1.data_mut()[i] = orig + opts.step;
            let (plus, sig_plus) = evaluate(&work, &build)?;
            work[k].1.data_mut()[i] = orig - opts.step;
            let (minus, sig_minus) = evaluate(&work, &build)?;
            work[k].1.data_mut()[i] = orig;
            if opts.skip_kinks && (sig_plus != signature || sig_minus != signature) {
                t.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic.data()[i];
            let e = relative_error(a, numeric, opts.floor);
            if e >= t.max_rel_error {
                t.max_rel_error = e;
                t.worst_index = i;
                t.analytic = a;
                t.numeric = numeric;
            }
            t.checked += 1;
        }
        report.tensors.push(t);
    }
    Ok(report)
}
