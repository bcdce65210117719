//! Binary checkpoint layout (all little-endian):
//!
//! ```text
//! "HFR1" | rows: u32 | d: u32 | K: u32 | X: rows*d f64 (row-major)
//!        | W: K*d f64 | delta: f64 | mode: u8 | norm_exponent: f64
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Mode, ModelParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HFR1";

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let (rows, d, k) = (params.x.rows(), params.dim(), params.layers());
    let mut buf = Vec::with_capacity(4 + 12 + 8 * (rows * d + k * d + 2) + 1);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    for n in [rows, d, k] {
        buf.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for v in params.x.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in params.w.iter().flatten() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&params.delta.to_le_bytes());
    buf.push(params.mode.tag());
    buf.extend_from_slice(&params.norm_exponent.to_le_bytes());
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (needed {n} more)", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(Error::Checkpoint("wrong magic bytes".into()));
    }
    let rows = cur.u32()?;
    let d = cur.u32()?;
    let k = cur.u32()?;
    let expected = rows
        .checked_mul(d)
        .and_then(|x| x.checked_add(k.checked_mul(d)?))
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(4 + 12 + 8 + 1 + 8))
        .ok_or_else(|| Error::Checkpoint("header dimensions overflow".into()))?;
    if bytes.len() < expected {
        return Err(Error::Checkpoint(format!(
            "truncated: {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let mut x = Vec::with_capacity(rows * d);
    for _ in 0..rows * d {
        x.push(cur.f64()?);
    }
    let mut w = Vec::with_capacity(k);
    for _ in 0..k {
        w.push((0..d).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?);
    }
    let delta = cur.f64()?;
    let tag = cur.take(1)?[0];
    let mode = Mode::from_tag(tag).ok_or_else(|| Error::Checkpoint(format!("unknown mode tag {tag}")))?;
    let norm_exponent = cur.f64()?;
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(ModelParams {
        x: Matrix::from_vec(rows, d, x),
        w,
        delta,
        mode,
        norm_exponent,
    })
}

pub fn write_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
