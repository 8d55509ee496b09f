//! Experiment specs, the train/evaluate grid and report files.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use camconv_core::metrics::{evaluate, mean_report, median_report, MetricReport, METRIC_NAMES};
use camconv_net::{predict_depth, train_on_samples, ModelParams, NetConfig, NetError, TrainConfig};
use camconv_synth::{build_dataset, load_dataset, CameraSet, DatasetSpec, Sample};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::orderings::{assert_orderings, OrderingOutcome};

pub const REPORT_JSON: &str = "report.json";
pub const CELLS_CSV: &str = "cells.csv";
pub const SUMMARY_CSV: &str = "summary.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "plain")]
    Plain,
    #[serde(rename = "plain+focalnorm")]
    PlainFocalNorm,
    #[serde(rename = "camconvs")]
    CamConvs,
    #[serde(rename = "camconvs+focalnorm")]
    CamConvsFocalNorm,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::PlainFocalNorm => "plain+focalnorm",
            Variant::CamConvs => "camconvs",
            Variant::CamConvsFocalNorm => "camconvs+focalnorm",
        }
    }

    pub fn uses_camconvs(self) -> bool {
        matches!(self, Variant::CamConvs | Variant::CamConvsFocalNorm)
    }

    pub fn uses_focal_norm(self) -> bool {
        matches!(self, Variant::PlainFocalNorm | Variant::CamConvsFocalNorm)
    }

    /// `base` with this variant's switches and the given seed.
    pub fn configure(self, base: &NetConfig, seed: u64) -> NetConfig {
        NetConfig {
            use_camconvs: self.uses_camconvs(),
            use_focal_norm: self.uses_focal_norm(),
            seed,
            ..base.clone()
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One trained model: a variant and the camera set it is trained on.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub train: String,
    pub variant: Variant,
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} trained on {}", self.variant, self.train)
    }
}

/// `better` must beat `worse` on `test` in median sc_inv and median rmse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingSpec {
    pub name: String,
    pub test: String,
    pub better: ModelSpec,
    pub worse: ModelSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    /// Multiplies every preset sensor size and focal length.
    pub resolution_scale: f64,
    pub dataset_seed: u64,
    /// Half-open scene-seed range of every training set.
    pub train_scenes: [u64; 2],
    pub train_views: usize,
    /// Half-open scene-seed range of every test set; must not overlap `train_scenes`.
    pub test_scenes: [u64; 2],
    pub test_views: usize,
    /// Shared network settings; each variant sets the camconv and focal-norm switches.
    pub net: NetConfig,
    /// Shared training settings; `datasets` is ignored and `seed` is set per run.
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub models: Vec<ModelSpec>,
    pub test_sets: Vec<String>,
    #[serde(default)]
    pub orderings: Vec<OrderingSpec>,
}

fn distinct<T: Ord + Clone>(items: &[T]) -> bool {
    items.iter().cloned().collect::<BTreeSet<_>>().len() == items.len()
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| HarnessError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Spec(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if !distinct(&self.seeds) {
            return bad("seeds must be distinct".into());
        }
        let [a0, a1] = self.train_scenes;
        let [b0, b1] = self.test_scenes;
        if a0 >= a1 || b0 >= b1 {
            return bad("scene ranges must be non-empty".into());
        }
        if a0 < b1 && b0 < a1 {
            return bad(format!("train scenes {a0}..{a1} overlap test scenes {b0}..{b1}"));
        }
        if self.train_views == 0 || self.test_views == 0 {
            return bad("views per scene must be positive".into());
        }
        if !(self.resolution_scale.is_finite() && self.resolution_scale > 0.0) {
            return bad("resolution_scale must be positive".into());
        }
        if self.models.is_empty() || self.test_sets.is_empty() {
            return bad("models and test_sets must be non-empty".into());
        }
        if !distinct(&self.models) || !distinct(&self.test_sets) {
            return bad("models and test sets must be distinct".into());
        }
        for cam in self.models.iter().map(|m| &m.train).chain(&self.test_sets) {
            cam.parse::<CameraSet>()?;
        }
        for o in &self.orderings {
            if !self.test_sets.contains(&o.test) {
                return bad(format!("ordering `{}` uses unknown test set `{}`", o.name, o.test));
            }
            for m in [&o.better, &o.worse] {
                if !self.models.contains(m) {
                    return bad(format!("ordering `{}` uses unknown model `{m}`", o.name));
                }
            }
        }
        for m in &self.models {
            m.variant.configure(&self.net, 0).validate()?;
        }
        self.train.validate()?;
        Ok(())
    }

    fn dataset_spec(&self, role: &str, camera: &str) -> DatasetSpec {
        let (scenes, views) = if role == "train" {
            (self.train_scenes, self.train_views)
        } else {
            (self.test_scenes, self.test_views)
        };
        DatasetSpec {
            name: format!("{role} {camera}"),
            camera: camera.to_string(),
            scene_seeds: scenes,
            views_per_scene: views,
            resolution_scale: self.resolution_scale,
            seed: self.dataset_seed,
            augmentation: None,
        }
    }
}

/// Directory name for a camera notation.
pub fn slug(camera: &str) -> String {
    camera
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Metrics of one trained model on one test set, or why there are none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub variant: Variant,
    pub train: String,
    pub test: String,
    pub seed: u64,
    pub metrics: Option<MetricReport>,
    pub diverged: Option<String>,
}

/// Statistics over seeds for one (model, test set) pair; diverged seeds are left out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub variant: Variant,
    pub train: String,
    pub test: String,
    pub seeds: usize,
    pub diverged: usize,
    pub mean: Option<MetricReport>,
    pub median: Option<MetricReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub spec: ExperimentSpec,
    /// Models in spec order, then seeds, then test sets.
    pub cells: Vec<Cell>,
    /// Test sets in spec order, then models.
    pub aggregates: Vec<Aggregate>,
    pub orderings: Vec<OrderingOutcome>,
}

impl RunReport {
    pub fn aggregate(&self, model: &ModelSpec, test: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.variant == model.variant && a.train == model.train && a.test == test)
    }

    pub fn orderings_pass(&self) -> bool {
        self.orderings.iter().all(|o| o.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per cell.
    pub fn cells_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["variant", "train", "test", "seed", "status"];
        header.extend(METRIC_NAMES);
        header.push("n_valid");
        w.write_record(&header)?;
        for c in &self.cells {
            let mut rec = vec![
                c.variant.to_string(),
                c.train.clone(),
                c.test.clone(),
                c.seed.to_string(),
                if c.metrics.is_some() { "ok".into() } else { "diverged".into() },
            ];
            push_metrics(&mut rec, c.metrics.as_ref());
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
    }

    /// One row per (test set, model) with median and mean metrics.
    pub fn summary_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ["test", "train", "variant", "seeds", "diverged"].map(String::from).to_vec();
        for stat in ["median", "mean"] {
            header.extend(METRIC_NAMES.iter().map(|m| format!("{stat}_{m}")));
            header.push(format!("{stat}_n_valid"));
        }
        w.write_record(&header)?;
        for a in &self.aggregates {
            let mut rec = vec![
                a.test.clone(),
                a.train.clone(),
                a.variant.to_string(),
                a.seeds.to_string(),
                a.diverged.to_string(),
            ];
            push_metrics(&mut rec, a.median.as_ref());
            push_metrics(&mut rec, a.mean.as_ref());
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
    }

    /// Writes the JSON report and both CSV tables into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(REPORT_JSON), self.to_json()?)?;
        fs::write(dir.join(CELLS_CSV), self.cells_csv()?)?;
        fs::write(dir.join(SUMMARY_CSV), self.summary_csv()?)?;
        Ok(())
    }
}

fn push_metrics(rec: &mut Vec<String>, m: Option<&MetricReport>) {
    match m {
        Some(m) => {
            rec.extend(m.values().iter().map(|v| v.to_string()));
            rec.push(m.n_valid.to_string());
        }
        None => rec.extend(std::iter::repeat(String::new()).take(METRIC_NAMES.len() + 1)),
    }
}

/// Mean of the per-image metrics over a test set.
pub fn evaluate_on(params: &ModelParams, samples: &[Sample]) -> Result<MetricReport> {
    let per_image = samples
        .iter()
        .map(|s| Ok(evaluate(&predict_depth(params, s)?, &s.depth)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_report(&per_image)?)
}

fn aggregate(cells: &[Cell], model: &ModelSpec, test: &str) -> Result<Aggregate> {
    let mine: Vec<&Cell> = cells
        .iter()
        .filter(|c| c.variant == model.variant && c.train == model.train && c.test == test)
        .collect();
    let ok: Vec<MetricReport> = mine.iter().filter_map(|c| c.metrics).collect();
    let (mean, median) = if ok.is_empty() {
        (None, None)
    } else {
        (Some(mean_report(&ok)?), Some(median_report(&ok)?))
    };
    Ok(Aggregate {
        variant: model.variant,
        train: model.train.clone(),
        test: test.to_string(),
        seeds: mine.len(),
        diverged: mine.len() - ok.len(),
        mean,
        median,
    })
}

/// Builds (or reuses) the datasets of `spec` under `out/datasets`, returning their directories.
pub fn prepare_datasets(spec: &ExperimentSpec, out: &Path) -> Result<(Vec<PathBuf>, Vec<PathBuf>)> {
    let root = out.join("datasets");
    let build = |role: &str, camera: &str| -> Result<PathBuf> {
        let dir = root.join(format!("{role}-{}", slug(camera)));
        build_dataset(&spec.dataset_spec(role, camera), &dir)?;
        Ok(dir)
    };
    let mut train_dirs = Vec::new();
    for m in &spec.models {
        train_dirs.push(build("train", &m.train)?);
    }
    let mut test_dirs = Vec::new();
    for t in &spec.test_sets {
        test_dirs.push(build("test", t)?);
    }
    Ok((train_dirs, test_dirs))
}

/// Trains every model for every seed, evaluates it on every test set and
/// writes the report into `out`. `progress` receives one line per finished run.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path, progress: &mut dyn FnMut(&str)) -> Result<RunReport> {
    spec.validate()?;
    let (train_dirs, test_dirs) = prepare_datasets(spec, out)?;
    let tests = test_dirs
        .iter()
        .map(|d| Ok(load_dataset(d)?.samples))
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for (model, dir) in spec.models.iter().zip(&train_dirs) {
        let train_samples = load_dataset(dir)?.samples;
        for &seed in &spec.seeds {
            let net = model.variant.configure(&spec.net, seed);
            let cfg = TrainConfig {
                seed,
                datasets: Vec::new(),
                ..spec.train.clone()
            };
            let trained = match train_on_samples(&cfg, &net, &train_samples) {
                Ok(o) => Ok(o.params),
                Err(e @ NetError::Diverged { .. }) => Err(e.to_string()),
                Err(e) => return Err(e.into()),
            };
            for (test, samples) in spec.test_sets.iter().zip(&tests) {
                let (metrics, diverged) = match &trained {
                    Ok(params) => (Some(evaluate_on(params, samples)?), None),
                    Err(reason) => (None, Some(reason.clone())),
                };
                cells.push(Cell {
                    variant: model.variant,
                    train: model.train.clone(),
                    test: test.clone(),
                    seed,
                    metrics,
                    diverged,
                });
            }
            let status = match &trained {
                Ok(_) => "done".to_string(),
                Err(r) => r.clone(),
            };
            progress(&format!("{model}, seed {seed}: {status}"));
        }
    }
    let mut aggregates = Vec::new();
    for test in &spec.test_sets {
        for model in &spec.models {
            aggregates.push(aggregate(&cells, model, test)?);
        }
    }
    let mut report = RunReport {
        spec: spec.clone(),
        cells,
        aggregates,
        orderings: Vec::new(),
    };
    report.orderings = assert_orderings(&report)?;
    report.write(out)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec() -> ExperimentSpec {
        ExperimentSpec {
            name: "t".into(),
            resolution_scale: 0.125,
            dataset_seed: 1,
            train_scenes: [0, 2],
            train_views: 1,
            test_scenes: [100, 101],
            test_views: 1,
            net: NetConfig {
                levels: 2,
                base_channels: 2,
                ..Default::default()
            },
            train: TrainConfig {
                iterations: 2,
                batch_size: 1,
                ..Default::default()
            },
            seeds: vec![0],
            models: vec![ModelSpec {
                train: "s1·f64".into(),
                variant: Variant::Plain,
            }],
            test_sets: vec!["s1·f64".into()],
            orderings: Vec::new(),
        }
    }

    #[test]
    fn overlapping_scene_ranges_are_rejected() {
        let mut s = spec();
        s.test_scenes = [1, 5];
        assert!(matches!(s.validate(), Err(HarnessError::Spec(_))));
        s.test_scenes = [2, 5];
        s.validate().unwrap();
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        let mut s = spec();
        s.seeds.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn orderings_must_reference_the_grid() {
        let mut s = spec();
        s.orderings.push(OrderingSpec {
            name: "x".into(),
            test: "s1·f128".into(),
            better: s.models[0].clone(),
            worse: s.models[0].clone(),
        });
        assert!(s.validate().is_err());
        s.orderings[0].test = "s1·f64".into();
        s.orderings[0].worse.variant = Variant::CamConvs;
        assert!(s.validate().is_err());
    }

    #[test]
    fn bad_notation_is_a_spec_error() {
        let mut s = spec();
        s.test_sets = vec!["s9·f64".into()];
        assert!(s.validate().unwrap_err().is_config());
    }

    #[test]
    fn variants_round_trip_through_json() {
        for v in [Variant::Plain, Variant::PlainFocalNorm, Variant::CamConvs, Variant::CamConvsFocalNorm] {
            let j = serde_json::to_string(&v).unwrap();
            assert_eq!(j, format!("\"{v}\""));
            assert_eq!(serde_json::from_str::<Variant>(&j).unwrap(), v);
        }
        let n = Variant::CamConvsFocalNorm.configure(&NetConfig::default(), 7);
        assert!(n.use_camconvs && n.use_focal_norm && n.seed == 7);
    }

    #[test]
    fn slugs_are_path_safe() {
        assert_eq!(slug("s1·U·f72·f128"), "s1_U_f72_f128");
    }
}
