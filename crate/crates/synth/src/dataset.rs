//! Dataset specs, deterministic sample generation and the on-disk layout.
//!
//! ```text
//! DIR/manifest.json
//! DIR/samples/00000/{rgb.ppm, depth.pfm, mask.pgm, cam.json}
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use camconv_core::camera::IntrinsicsRecord;
use camconv_core::depth::Mask;
use camconv_core::{pnm, CameraIntrinsics, DepthMap, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive::{derive_view, CropWindow};
use crate::error::{Result, SynthError};
use crate::notation::{CameraSet, FocalDistribution};
use crate::render::{render, Provenance, Sample};
use crate::scene::{generate_scene, sample_pose};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    /// Range of the resize factor applied after cropping.
    pub scale: [f64; 2],
    /// Maximum principal-point shift as a fraction of the sensor extent.
    pub max_shift: f64,
}

impl Default for Augmentation {
    fn default() -> Self {
        Self {
            scale: [0.7, 1.3],
            max_shift: 0.15,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    /// Camera-set notation, e.g. `s1·U·f72·f128`.
    pub camera: String,
    /// Scene seeds `[start, end)`.
    pub scene_seeds: [u64; 2],
    pub views_per_scene: usize,
    /// Uniform factor applied to every sensor size and focal length.
    #[serde(default = "one")]
    pub resolution_scale: f64,
    /// Seed for focal draws and augmentation.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub augmentation: Option<Augmentation>,
}

impl DatasetSpec {
    pub fn camera_set(&self) -> Result<CameraSet> {
        self.camera.parse()
    }

    pub fn len(&self) -> usize {
        (self.scene_seeds[1].saturating_sub(self.scene_seeds[0])) as usize * self.views_per_scene
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        self.camera_set()?;
        if self.scene_seeds[1] <= self.scene_seeds[0] {
            return Err(SynthError::Spec(format!("empty scene seed range {:?}", self.scene_seeds)));
        }
        if self.views_per_scene == 0 {
            return Err(SynthError::Spec("views_per_scene must be >= 1".into()));
        }
        if !(self.resolution_scale.is_finite() && self.resolution_scale > 0.0) {
            return Err(SynthError::Spec("resolution_scale must be positive".into()));
        }
        if let Some(a) = &self.augmentation {
            if !(a.scale[0] > 0.0 && a.scale[0] <= a.scale[1] && (0.0..0.5).contains(&a.max_shift)) {
                return Err(SynthError::Spec(format!("invalid augmentation {a:?}")));
            }
        }
        Ok(())
    }

    /// Focal distribution after applying the resolution scale.
    pub fn focal_distribution(&self) -> Result<FocalDistribution> {
        Ok(self.camera_set()?.focals.scaled(self.resolution_scale))
    }
}

/// Camera for sample `index`, before augmentation.
fn sample_camera(spec: &DatasetSpec, set: &CameraSet, index: usize) -> Result<CameraIntrinsics> {
    let n = set.sensors.len();
    let (_, w, h) = &set.sensors[index % n];
    let s = spec.resolution_scale;
    let w = (*w as f64 * s).round() as usize;
    let h = (*h as f64 * s).round() as usize;
    let f = match &set.focals {
        FocalDistribution::Fixed(v) => v[(index / n) % v.len()],
        FocalDistribution::Uniform { lo, hi } => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index as u64);
            rng.gen_range(*lo..=*hi)
        }
    };
    Ok(CameraIntrinsics::centered(f * s, w, h)?)
}

/// Renders every sample of `spec` in memory.
pub fn generate_samples(spec: &DatasetSpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    let set = spec.camera_set()?;
    let mut out = Vec::with_capacity(spec.len());
    let mut index = 0;
    for scene_seed in spec.scene_seeds[0]..spec.scene_seeds[1] {
        let scene = generate_scene(scene_seed);
        for view in 0..spec.views_per_scene {
            // Poses depend only on the scene and view so every camera set sees the same content.
            let mut pose_rng = ChaCha8Rng::seed_from_u64(scene_seed.wrapping_mul(1_000_003) ^ view as u64);
            let pose = sample_pose(&scene, &mut pose_rng);
            let cam = sample_camera(spec, &set, index)?;
            let sample = match &spec.augmentation {
                None => render(&scene, &cam, &pose)?,
                Some(aug) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xa5a5_0000 ^ index as u64);
                    augmented(&scene, &cam, &pose, aug, &mut rng)?
                }
            };
            out.push(sample);
            index += 1;
        }
    }
    Ok(out)
}

/// Renders a larger view and derives `cam`'s sensor size from a shifted, rescaled crop.
fn augmented(
    scene: &crate::scene::Scene,
    cam: &CameraIntrinsics,
    pose: &crate::scene::Pose,
    aug: &Augmentation,
    rng: &mut ChaCha8Rng,
) -> Result<Sample> {
    let s = rng.gen_range(aug.scale[0]..=aug.scale[1]);
    let (w, h) = (cam.width(), cam.height());
    let ww = ((w as f64 / s).round() as usize).max(1);
    let wh = ((h as f64 / s).round() as usize).max(1);
    let pad_x = (aug.max_shift * ww as f64).ceil() as usize;
    let pad_y = (aug.max_shift * wh as f64).ceil() as usize;
    let source = CameraIntrinsics::centered(cam.f() / s, ww + 2 * pad_x, wh + 2 * pad_y)?;
    let rendered = render(scene, &source, pose)?;
    let window = CropWindow {
        x0: rng.gen_range(0..=2 * pad_x),
        y0: rng.gen_range(0..=2 * pad_y),
        w: ww,
        h: wh,
    };
    derive_view(&rendered, window, w as f64 / ww as f64, h as f64 / wh as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: usize,
    pub dir: String,
    pub scene_seed: u64,
    pub cam: IntrinsicsRecord,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: DatasetSpec,
    pub samples: Vec<SampleEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
const LOCK_FILE: &str = ".lock";

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(LockGuard(path))
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(SynthError::Locked(dir.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_sample(dir: &Path, sample: &Sample) -> Result<()> {
    fs::create_dir_all(dir)?;
    pnm::save_ppm(dir.join("rgb.ppm"), &sample.rgb)?;
    pnm::save_pfm(dir.join("depth.pfm"), &sample.depth.values().cast())?;
    pnm::save_mask_pgm(dir.join("mask.pgm"), sample.depth.mask())?;
    let rec = IntrinsicsRecord::from(*sample.cam());
    fs::write(dir.join("cam.json"), serde_json::to_string_pretty(&rec)?)?;
    Ok(())
}

/// Writes `spec`'s samples under `out`; an existing matching dataset is reused.
pub fn build_dataset(spec: &DatasetSpec, out: &Path) -> Result<Manifest> {
    spec.validate()?;
    fs::create_dir_all(out)?;
    let _lock = LockGuard::acquire(out)?;
    if let Ok(existing) = read_manifest(out) {
        if &existing.spec == spec {
            return Ok(existing);
        }
    }
    let _ = fs::remove_file(out.join(MANIFEST_FILE));
    let samples = generate_samples(spec)?;
    let mut entries = Vec::with_capacity(samples.len());
    for (id, s) in samples.iter().enumerate() {
        let rel = format!("samples/{id:05}");
        write_sample(&out.join(&rel), s)?;
        entries.push(SampleEntry {
            id,
            dir: rel,
            scene_seed: s.scene_seed,
            cam: IntrinsicsRecord::from(*s.cam()),
            provenance: s.provenance.clone(),
        });
    }
    let manifest = Manifest {
        spec: spec.clone(),
        samples: entries,
    };
    let tmp = out.join("manifest.json.tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// A dataset read back from disk.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: Manifest,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Distinct `(width, height)` sensor sizes in first-appearance order.
    pub fn sensor_sizes(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for s in &self.samples {
            let k = (s.cam().width(), s.cam().height());
            if !out.contains(&k) {
                out.push(k);
            }
        }
        out
    }
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let bad = |m: String| SynthError::Dataset(dir.to_path_buf(), m);
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for e in &manifest.samples {
        let sd = dir.join(&e.dir);
        let rgb = pnm::load_ppm(sd.join("rgb.ppm"))?;
        let depth: Grid<f64> = pnm::load_pfm(sd.join("depth.pfm"))?.cast();
        let mask: Mask = pnm::load_mask_pgm(sd.join("mask.pgm"))?;
        let rec: IntrinsicsRecord = serde_json::from_str(&fs::read_to_string(sd.join("cam.json"))?)?;
        let cam = CameraIntrinsics::try_from(rec)?;
        if rec != e.cam {
            return Err(bad(format!("{}: cam.json disagrees with the manifest", e.dir)));
        }
        if rgb.height() != cam.height() || rgb.width() != cam.width() {
            return Err(bad(format!("{}: image size does not match the camera", e.dir)));
        }
        samples.push(Sample {
            rgb,
            depth: DepthMap::new(depth, mask, cam)?,
            scene_seed: e.scene_seed,
            provenance: e.provenance.clone(),
        });
    }
    Ok(Dataset { manifest, samples })
}
