//! Portable float map (PFM), pixmap (PPM, P6) and graymap (PGM, P5) I/O.
//!
//! PFM rows are stored bottom-to-top as the format prescribes; grids are
//! always top-to-bottom in memory.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::depth::Mask;
use crate::error::{Error, Result};
use crate::grid::Grid;

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Reads one whitespace-delimited header token, skipping `#` comments.
fn token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        let b = byte[0];
        if b == b'#' && tok.is_empty() {
            let mut line = Vec::new();
            r.read_until(b'\n', &mut line)?;
            continue;
        }
        if b.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(b);
    }
    if tok.is_empty() {
        return Err(bad("unexpected end of header"));
    }
    String::from_utf8(tok).map_err(|_| bad("non-ASCII header"))
}

fn number<R: BufRead, N: std::str::FromStr>(r: &mut R, what: &str) -> Result<N> {
    let t = token(r)?;
    t.parse().map_err(|_| bad(format!("invalid {what} `{t}`")))
}

pub fn write_pfm<W: Write>(out: W, grid: &Grid<f32>) -> Result<()> {
    let magic = match grid.channels() {
        1 => "Pf",
        3 => "PF",
        c => return Err(bad(format!("PFM holds 1 or 3 channels, not {c}"))),
    };
    let mut w = BufWriter::new(out);
    write!(w, "{magic}\n{} {}\n-1.0\n", grid.width(), grid.height())?;
    let row_len = grid.width() * grid.channels();
    for row in grid.data().chunks(row_len.max(1)).rev() {
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_pfm<R: Read>(input: R) -> Result<Grid<f32>> {
    let mut r = BufReader::new(input);
    let channels = match token(&mut r)?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        m => return Err(bad(format!("not a PFM file (magic `{m}`)"))),
    };
    let width: usize = number(&mut r, "width")?;
    let height: usize = number(&mut r, "height")?;
    let scale: f32 = number(&mut r, "scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("PFM scale must be non-zero"));
    }
    let little = scale < 0.0;
    let n = width * height * channels;
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| bad(format!("PFM payload shorter than {n} values")))?;
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| {
            let b = [b[0], b[1], b[2], b[3]];
            if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }
        })
        .collect();
    let row_len = width * channels;
    let mut data = Vec::with_capacity(n);
    for row in values.chunks(row_len.max(1)).rev() {
        data.extend_from_slice(row);
    }
    Grid::from_vec(height, width, channels, data)
}

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a 3-channel grid with values in `[0, 1]` as 8-bit P6.
pub fn write_ppm<W: Write>(out: W, rgb: &Grid<f32>) -> Result<()> {
    if rgb.channels() != 3 {
        return Err(bad(format!("PPM needs 3 channels, got {}", rgb.channels())));
    }
    let mut w = BufWriter::new(out);
    write!(w, "P6\n{} {}\n255\n", rgb.width(), rgb.height())?;
    let bytes: Vec<u8> = rgb.data().iter().map(|&v| to_byte(v)).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

fn read_bytes<R: Read>(input: R, magic: &str, channels: usize) -> Result<(usize, usize, Vec<u8>)> {
    let mut r = BufReader::new(input);
    let m = token(&mut r)?;
    if m != magic {
        return Err(bad(format!("expected `{magic}`, found `{m}`")));
    }
    let width: usize = number(&mut r, "width")?;
    let height: usize = number(&mut r, "height")?;
    let maxval: u32 = number(&mut r, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(bad(format!("only 8-bit maxval is supported, got {maxval}")));
    }
    let mut bytes = vec![0u8; width * height * channels];
    r.read_exact(&mut bytes)
        .map_err(|_| bad("image payload is truncated"))?;
    if maxval != 255 {
        for b in &mut bytes {
            *b = ((*b as u32 * 255 + maxval / 2) / maxval).min(255) as u8;
        }
    }
    Ok((width, height, bytes))
}

/// Reads 8-bit P6 into a `[0, 1]` grid.
pub fn read_ppm<R: Read>(input: R) -> Result<Grid<f32>> {
    let (w, h, bytes) = read_bytes(input, "P6", 3)?;
    Grid::from_vec(h, w, 3, bytes.iter().map(|&b| b as f32 / 255.0).collect())
}

/// Writes a validity mask as P5 (255 = valid, 0 = invalid).
pub fn write_mask_pgm<W: Write>(out: W, mask: &Mask) -> Result<()> {
    let mut w = BufWriter::new(out);
    write!(w, "P5\n{} {}\n255\n", mask.width(), mask.height())?;
    let bytes: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Reads P5; any non-zero sample is valid.
pub fn read_mask_pgm<R: Read>(input: R) -> Result<Mask> {
    let (w, h, bytes) = read_bytes(input, "P5", 1)?;
    Mask::new(h, w, bytes.iter().map(|&b| b != 0).collect())
}

pub fn save_pfm(path: impl AsRef<Path>, grid: &Grid<f32>) -> Result<()> {
    write_pfm(File::create(path)?, grid)
}

pub fn load_pfm(path: impl AsRef<Path>) -> Result<Grid<f32>> {
    read_pfm(File::open(path)?)
}

pub fn save_ppm(path: impl AsRef<Path>, rgb: &Grid<f32>) -> Result<()> {
    write_ppm(File::create(path)?, rgb)
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<Grid<f32>> {
    read_ppm(File::open(path)?)
}

pub fn save_mask_pgm(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    write_mask_pgm(File::create(path)?, mask)
}

pub fn load_mask_pgm(path: impl AsRef<Path>) -> Result<Mask> {
    read_mask_pgm(File::open(path)?)
}
