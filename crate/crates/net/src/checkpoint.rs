//! Single-file parameter checkpoints.
//!
//! ```text
//! "CAMF" | version u32 | config JSON length u32 | config JSON | tensor count u32
//! per tensor: name length u32 | name | 3 x u32 shape | f32 values
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use camconv_core::Grid;

use crate::config::NetConfig;
use crate::error::{NetError, Result};
use crate::model::ModelParams;

pub const MAGIC: &[u8; 4] = b"CAMF";
pub const VERSION: u32 = 1;

pub fn encode(params: &ModelParams) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let json = serde_json::to_vec(&params.config)?;
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(params.tensors().len() as u32).to_le_bytes());
    for (name, t) in params.tensors() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let (h, w, c) = t.shape();
        for d in [h, w, c] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn decode_inner(buf: &[u8]) -> std::result::Result<(NetConfig, Vec<(String, Grid<f32>)>), String> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let n = r.u32()? as usize;
    let config: NetConfig = serde_json::from_slice(r.take(n)?).map_err(|e| format!("config: {e}"))?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| "tensor name is not UTF-8".to_string())?;
        let (h, w, c) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let len = h.checked_mul(w).and_then(|x| x.checked_mul(c)).ok_or("tensor shape overflows")?;
        let bytes = r.take(len.checked_mul(4).ok_or("tensor shape overflows")?)?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let grid = Grid::from_vec(h, w, c, data).map_err(|e| e.to_string())?;
        tensors.push((name, grid));
    }
    if r.pos != buf.len() {
        return Err(format!("{} trailing bytes", buf.len() - r.pos));
    }
    Ok((config, tensors))
}

pub fn decode(buf: &[u8], path: &Path) -> Result<ModelParams> {
    let err = |reason: String| NetError::Checkpoint {
        path: path.to_path_buf(),
        reason,
    };
    let (config, tensors) = decode_inner(buf).map_err(err)?;
    ModelParams::from_tensors(config, tensors).map_err(|e| err(e.to_string()))
}

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, encode(params)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelParams> {
    decode(&fs::read(path)?, path)
}
