use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use camconv_core::maps::{make_stack, STACK_CHANNELS};
use camconv_core::metrics::{evaluate, mean_report, median_report, MetricReport};
use camconv_core::pnm::save_pfm;
use camconv_core::{CameraIntrinsics, Grid};
use camconv_harness::gradsuite::{run_suite, TOLERANCE};
use camconv_harness::{run_experiment, ExperimentSpec, HarnessError, Result};
use camconv_net::checkpoint;
use camconv_net::{predict_depth, train, NetConfig, TrainConfig};
use camconv_synth::{build_dataset, load_dataset, DatasetSpec};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "camconv", version, about = "Camera-aware depth prediction at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset described by a dataset spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the six camera channels for a camera, stacked vertically, as a PFM.
    Maps {
        #[arg(long)]
        cam: PathBuf,
        /// Feature resolution as HxW.
        #[arg(long)]
        size: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network from a JSON job with `net` and `train` sections.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset directory.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Finite-difference checks of the graph primitives and losses.
    Gradcheck {
        /// Also check the full network.
        #[arg(long)]
        full: bool,
    },
    /// Run an experiment grid and check its orderings.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Deserialize)]
struct TrainJob {
    net: NetConfig,
    train: TrainConfig,
}

#[derive(Debug, Serialize)]
struct SampleScore {
    id: usize,
    metrics: MetricReport,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    checkpoint: PathBuf,
    data: PathBuf,
    samples: Vec<SampleScore>,
    mean: MetricReport,
    median: MetricReport,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Input {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || HarnessError::Usage(format!("size `{s}` is not of the form HxW"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

/// Outcome of a command that ran to completion: `true` when everything it checked held.
fn run(command: Command) -> Result<bool> {
    match command {
        Command::Synth { spec, out } => {
            let spec: DatasetSpec = read_json(&spec)?;
            let manifest = build_dataset(&spec, &out)?;
            println!("{} samples in {}", manifest.samples.len(), out.display());
            Ok(true)
        }
        Command::Maps { cam, size, out } => {
            let cam: CameraIntrinsics = read_json(&cam)?;
            let (h, w) = parse_size(&size)?;
            let stack = make_stack(&cam, h, w);
            let mut tiles = Grid::<f32>::zeros(STACK_CHANNELS * h, w, 1);
            for c in 0..STACK_CHANNELS {
                let ch = stack.channel(c);
                for y in 0..h {
                    for x in 0..w {
                        tiles.set(c * h + y, x, 0, ch.get(y, x, 0) as f32);
                    }
                }
            }
            save_pfm(&out, &tiles)?;
            Ok(true)
        }
        Command::Train { config, out } => {
            let job: TrainJob = read_json(&config)?;
            let outcome = train(&job.train, &job.net)?;
            checkpoint::save(&outcome.params, &out)?;
            if let Some(last) = outcome.loss_curve.last() {
                println!("final loss {last:.6}");
            }
            Ok(true)
        }
        Command::Eval { ckpt, data, report } => {
            let params = checkpoint::load(&ckpt)?;
            let dataset = load_dataset(&data)?;
            let mut samples = Vec::with_capacity(dataset.samples.len());
            for (entry, s) in dataset.manifest.samples.iter().zip(&dataset.samples) {
                let metrics = evaluate(&predict_depth(&params, s)?, &s.depth)?;
                samples.push(SampleScore { id: entry.id, metrics });
            }
            if samples.is_empty() {
                return Err(HarnessError::Usage(format!("{} has no samples", data.display())));
            }
            let all: Vec<MetricReport> = samples.iter().map(|s| s.metrics).collect();
            let out = EvalReport {
                checkpoint: ckpt,
                data,
                mean: mean_report(&all)?,
                median: median_report(&all)?,
                samples,
            };
            fs::write(&report, serde_json::to_string_pretty(&out)?)?;
            println!("sc_inv {:.4} rmse {:.4} (mean of {})", out.mean.sc_inv, out.mean.rmse, all.len());
            Ok(true)
        }
        Command::Gradcheck { full } => {
            let report = run_suite(full)?;
            for e in &report.entries {
                let mark = if e.passed { "ok  " } else { "FAIL" };
                println!(
                    "{mark} {:9} {:40} max rel {:.2e} ({} probes, {} at kinks)",
                    e.group, e.name, e.max_rel_error, e.checked, e.skipped
                );
            }
            println!("tolerance {TOLERANCE:e}; worst {:.2e}", report.max_rel_error());
            Ok(report.passed())
        }
        Command::Experiment { spec, out } => {
            let spec = ExperimentSpec::load(&spec)?;
            let report = run_experiment(&spec, &out, &mut |line| eprintln!("{line}"))?;
            for o in &report.orderings {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
                println!(
                    "{} {}: sc_inv {} vs {}, rmse {} vs {} ({})",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.name,
                    fmt(o.better_sc_inv),
                    fmt(o.worse_sc_inv),
                    fmt(o.better_rmse),
                    fmt(o.worse_rmse),
                    o.note
                );
            }
            Ok(report.orderings_pass())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
