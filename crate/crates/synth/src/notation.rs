//! Camera-set notation such as `s1·f72`, `s1·U·f72·f128` or `s1 s2 U f72 f128`.
//!
//! `sN` tokens name sensors, `fN` tokens name focal lengths (a preset name or
//! a pixel value such as `f90`), and `U` turns exactly two focals into a
//! uniform range. Several focals without `U` form a fixed set.

use std::fmt;
use std::str::FromStr;

use camconv_core::camera::{focal_preset, sensor_preset};
use serde::{Deserialize, Serialize};

use crate::error::SynthError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FocalDistribution {
    /// Focals cycled in order.
    Fixed(Vec<f64>),
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
}

impl FocalDistribution {
    pub fn contains(&self, f: f64) -> bool {
        match self {
            FocalDistribution::Fixed(v) => v.contains(&f),
            FocalDistribution::Uniform { lo, hi } => (*lo..=*hi).contains(&f),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        match self {
            FocalDistribution::Fixed(v) => FocalDistribution::Fixed(v.iter().map(|f| f * s).collect()),
            FocalDistribution::Uniform { lo, hi } => FocalDistribution::Uniform { lo: lo * s, hi: hi * s },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraSet {
    /// `(name, width, height)`.
    pub sensors: Vec<(String, usize, usize)>,
    pub focal_names: Vec<String>,
    pub focals: FocalDistribution,
}

fn split_tokens(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in s.split(|c: char| c == '·' || c == ',' || c == '*' || c.is_whitespace()) {
        let mut cur = String::new();
        for ch in chunk.chars() {
            if matches!(ch, 's' | 'f' | 'U') && !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            cur.push(ch);
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

impl FromStr for CameraSet {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, SynthError> {
        let err = |m: &str| SynthError::Notation(s.to_string(), m.to_string());
        let mut sensors = Vec::new();
        let mut focals = Vec::new();
        let mut focal_names = Vec::new();
        let mut uniform = false;
        for tok in split_tokens(s) {
            if tok == "U" {
                uniform = true;
            } else if tok.starts_with('s') {
                let (w, h) = sensor_preset(&tok).ok_or_else(|| err(&format!("unknown sensor `{tok}`")))?;
                sensors.push((tok, w, h));
            } else if let Some(rest) = tok.strip_prefix('f') {
                let f = focal_preset(&tok)
                    .or_else(|| rest.parse::<f64>().ok().filter(|f| f.is_finite() && *f > 0.0))
                    .ok_or_else(|| err(&format!("unknown focal `{tok}`")))?;
                focals.push(f);
                focal_names.push(tok);
            } else {
                return Err(err(&format!("unexpected token `{tok}`")));
            }
        }
        if sensors.is_empty() {
            return Err(err("no sensor given"));
        }
        if focals.is_empty() {
            return Err(err("no focal length given"));
        }
        let focals = if uniform {
            if focals.len() != 2 {
                return Err(err("a uniform range needs exactly two focals"));
            }
            FocalDistribution::Uniform {
                lo: focals[0].min(focals[1]),
                hi: focals[0].max(focals[1]),
            }
        } else {
            FocalDistribution::Fixed(focals)
        };
        Ok(CameraSet {
            sensors,
            focal_names,
            focals,
        })
    }
}

impl fmt::Display for CameraSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<&str> = self.sensors.iter().map(|s| s.0.as_str()).collect();
        if matches!(self.focals, FocalDistribution::Uniform { .. }) {
            parts.push("U");
        }
        parts.extend(self.focal_names.iter().map(String::as_str));
        write!(f, "{}", parts.join("·"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_preset() {
        let c: CameraSet = "s1·f72".parse().unwrap();
        assert_eq!(c.sensors, vec![("s1".to_string(), 256, 192)]);
        assert_eq!(c.focals, FocalDistribution::Fixed(vec![72.0]));
    }

    #[test]
    fn parses_uniform_multi_sensor() {
        for s in ["s1 s2 U f72 f128", "s1·s2·U·f72·f128", "s1s2Uf72f128"] {
            let c: CameraSet = s.parse().unwrap();
            assert_eq!(c.sensors.len(), 2);
            assert_eq!(c.focals, FocalDistribution::Uniform { lo: 72.0, hi: 128.0 });
            assert_eq!(c.to_string(), "s1·s2·U·f72·f128");
        }
    }

    #[test]
    fn parses_fixed_focal_set_and_special_names() {
        let c: CameraSet = "s1 f72 f128*".parse().unwrap();
        assert_eq!(c.focals, FocalDistribution::Fixed(vec![72.0, 128.0]));
        let c: CameraSet = "sK·fn".parse().unwrap();
        assert_eq!(c.sensors[0].1, 384);
        assert_eq!(c.focals, FocalDistribution::Fixed(vec![100.0]));
        let c: CameraSet = "s3·f90".parse().unwrap();
        assert_eq!(c.focals, FocalDistribution::Fixed(vec![90.0]));
    }

    #[test]
    fn rejects_malformed_notation() {
        for s in ["", "f72", "s1", "s9·f72", "s1·U·f72", "s1·fx", "s1·q"] {
            assert!(s.parse::<CameraSet>().is_err(), "{s}");
        }
    }
}
