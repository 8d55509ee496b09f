use std::path::PathBuf;

use camconv_core::losses::LossWeights;
use camconv_core::FocalNormalization;
use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};

/// Prediction heads attached to one decoder level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heads {
    /// Inverse depth and confidence.
    DepthConfidence,
    /// Inverse depth, confidence and surface normals.
    DepthConfidenceNormals,
}

impl Heads {
    pub fn has_normals(self) -> bool {
        self == Heads::DepthConfidenceNormals
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Number of stride-2 encoder stages.
    pub levels: usize,
    pub base_channels: usize,
    pub use_camconvs: bool,
    pub use_focal_norm: bool,
    /// Reference focal length in pixels for focal normalization.
    pub f_n: f64,
    /// Heads per decoder level, coarsest first; empty selects the default.
    pub heads: Vec<Heads>,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            base_channels: 16,
            use_camconvs: false,
            use_focal_norm: false,
            f_n: 100.0,
            heads: Vec::new(),
            seed: 0,
        }
    }
}

impl NetConfig {
    /// Normals at the coarsest level only.
    pub fn default_heads(levels: usize) -> Vec<Heads> {
        let mut h = vec![Heads::DepthConfidence; levels + 1];
        h[0] = Heads::DepthConfidenceNormals;
        h
    }

    pub fn resolved_heads(&self) -> Vec<Heads> {
        if self.heads.is_empty() {
            Self::default_heads(self.levels)
        } else {
            self.heads.clone()
        }
    }

    pub fn focal_normalization(&self) -> Result<FocalNormalization> {
        Ok(FocalNormalization::new(self.f_n)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NetError::Config(m));
        if self.levels < 2 {
            return bad(format!("levels = {} but at least 2 are required", self.levels));
        }
        if self.base_channels < 2 {
            return bad("base_channels must be at least 2".into());
        }
        if !(self.f_n.is_finite() && self.f_n > 0.0) {
            return bad(format!("f_n = {} must be positive", self.f_n));
        }
        let heads = self.resolved_heads();
        if heads.len() != self.levels + 1 {
            return bad(format!("{} head specs for {} decoder levels", heads.len(), self.levels + 1));
        }
        if heads[0] != Heads::DepthConfidenceNormals {
            return bad("the coarsest level must predict normals".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub loss_weights: LossWeights,
    /// Dataset directories written by `build_dataset`.
    pub datasets: Vec<PathBuf>,
    /// Sensor sizes `[w, h]` sharing one parameter set; empty uses every size present.
    pub sensor_group: Vec<[usize; 2]>,
    /// Seed for batch sampling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            learning_rate: 1e-3,
            iterations: 1000,
            batch_size: 4,
            loss_weights: LossWeights::default(),
            datasets: Vec::new(),
            sensor_group: Vec::new(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NetError::TrainConfig(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps must be positive");
        }
        self.loss_weights.validate()?;
        Ok(())
    }
}
