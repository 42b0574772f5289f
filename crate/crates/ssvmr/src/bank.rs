//! Binary feature-bank files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "SSVB" | version u16 | modality u8 | count u32 | dim u32 | max_frames u32
//! per item: id_len u32 | id (UTF-8) | frames u32 | frames * dim f64
//! ```

use std::path::Path;

use ssvmr_core::dataset::{FeatureBank, FeatureSequence, Modality};
use ssvmr_core::Tensor;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"SSVB";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 4 + 4;

fn len_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| CliError::from(ssvmr_core::Error::Contract(format!("{what} {n} exceeds u32"))))
}

pub fn encode_bank(bank: &FeatureBank) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + bank.items().iter().map(|i| 8 + i.id.len() + 8 * i.frames.data().len()).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(bank.modality.code());
    out.extend_from_slice(&len_u32(bank.len(), "item count")?.to_le_bytes());
    out.extend_from_slice(&len_u32(bank.dim, "dimension")?.to_le_bytes());
    out.extend_from_slice(&len_u32(bank.max_frames(), "frame count")?.to_le_bytes());
    for item in bank.items() {
        out.extend_from_slice(&len_u32(item.id.len(), "id length")?.to_le_bytes());
        out.extend_from_slice(item.id.as_bytes());
        out.extend_from_slice(&len_u32(item.frames.rows(), "frame count")?.to_le_bytes());
        for x in item.frames.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, offset: usize, reason: impl Into<String>) -> CliError {
        CliError::Format { path: self.path.to_path_buf(), offset: offset as u64, reason: reason.into() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => {
                Err(self.fail(self.pos, format!("truncated while reading {what} ({n} bytes needed, {} left)", self.bytes.len() - self.pos)))
            }
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

/// Parses a bank; `path` only labels errors.
pub fn decode_bank(bytes: &[u8], path: &Path) -> Result<FeatureBank> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4, "magic")? != MAGIC {
        return Err(r.fail(0, "bad magic, expected \"SSVB\""));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(r.fail(4, format!("unsupported version {version}")));
    }
    let code = r.u8("modality")?;
    let modality = Modality::from_code(code).ok_or_else(|| r.fail(6, format!("unknown modality code {code}")))?;
    let count = r.u32("count")? as usize;
    let dim = r.u32("dim")? as usize;
    let max_frames = r.u32("max_frames")? as usize;
    let mut bank = FeatureBank::new(modality, dim);
    let mut seen_max = 0;
    for i in 0..count {
        let start = r.pos;
        let id_len = r.u32("id length")? as usize;
        let id_at = r.pos;
        let id =
            std::str::from_utf8(r.take(id_len, "id")?).map_err(|e| r.fail(id_at, format!("item {i}: id is not UTF-8: {e}")))?.to_owned();
        let frames_at = r.pos;
        let frames = r.u32("frame count")? as usize;
        if frames > max_frames {
            return Err(r.fail(frames_at, format!("item {i}: {frames} frames exceeds declared max_frames {max_frames}")));
        }
        let n = frames.checked_mul(dim).ok_or_else(|| r.fail(frames_at, "frame payload size overflows"))?;
        let payload = r.take(n.checked_mul(8).ok_or_else(|| r.fail(frames_at, "frame payload size overflows"))?, "frame payload")?;
        let data: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            return Err(r.fail(frames_at + 4 + 8 * bad, format!("item {i}: non-finite value")));
        }
        let frames = Tensor::new(frames, dim, data).map_err(|e| r.fail(frames_at, format!("item {i}: {e}")))?;
        seen_max = seen_max.max(frames.rows());
        bank.push(FeatureSequence { id, frames }).map_err(|e| r.fail(start, format!("item {i}: {e}")))?;
    }
    if seen_max != max_frames {
        return Err(r.fail(15, format!("declared max_frames {max_frames} but longest item has {seen_max}")));
    }
    if r.pos != bytes.len() {
        return Err(r.fail(r.pos, format!("{} trailing bytes after {count} items", bytes.len() - r.pos)));
    }
    Ok(bank)
}

pub fn write_bank(bank: &FeatureBank, path: &Path) -> Result<()> {
    std::fs::write(path, encode_bank(bank)?).map_err(|e| CliError::io(path, e))
}

pub fn read_bank(path: &Path) -> Result<FeatureBank> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_bank(&bytes, path)
}
