//! Model checkpoints.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "SSVM" | version u16 | d_v u32 | d_m u32 | hidden u32 | d_e u32
//! then the eight parameter tensors in `PARAM_NAMES` order as raw f64
//! ```
//! Tensor shapes follow from the dimensions, so none are stored.

use std::path::Path;

use sha2::{Digest, Sha256};
use ssvmr_core::backbone::{Dims, ModelParams};
use ssvmr_core::Tensor;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"SSVM";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 * 4;

pub fn encode_checkpoint(params: &ModelParams) -> Result<Vec<u8>> {
    let d = params.dims;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [d.d_v, d.d_m, d.hidden, d.d_e] {
        let v = u32::try_from(v).map_err(|_| ssvmr_core::Error::Contract(format!("dimension {v} exceeds u32")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for t in params.tensors() {
        for x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<ModelParams> {
    let fail = |offset: usize, reason: String| CliError::Format { path: path.to_path_buf(), offset: offset as u64, reason };
    if bytes.len() < HEADER_LEN {
        return Err(fail(bytes.len(), format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(fail(0, "bad magic, expected \"SSVM\"".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(fail(4, format!("unsupported version {version}")));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().expect("4 bytes")) as usize;
    let dims = Dims { d_v: dim(0), d_m: dim(1), hidden: dim(2), d_e: dim(3) };
    let shapes = ModelParams::shapes_for(dims);
    let mut pos = HEADER_LEN;
    let mut tensors = Vec::with_capacity(shapes.len());
    for s in shapes {
        let n = s.len();
        let end = n.checked_mul(8).and_then(|b| b.checked_add(pos)).filter(|&e| e <= bytes.len());
        let Some(end) = end else {
            return Err(fail(pos, format!("truncated while reading a {} tensor", s)));
        };
        let data: Vec<f64> = bytes[pos..end].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            return Err(fail(pos + 8 * bad, "non-finite weight".into()));
        }
        tensors.push(Tensor::new(s.rows, s.cols, data)?);
        pos = end;
    }
    if pos != bytes.len() {
        return Err(fail(pos, format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(ModelParams::from_tensors(dims, tensors)?)
}

/// Short content hash identifying a checkpoint.
pub fn checkpoint_id(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn write_checkpoint(params: &ModelParams, path: &Path) -> Result<String> {
    let bytes = encode_checkpoint(params)?;
    std::fs::write(path, &bytes).map_err(|e| CliError::io(path, e))?;
    Ok(checkpoint_id(&bytes))
}

/// Loads a checkpoint and returns it with its id.
pub fn read_checkpoint(path: &Path) -> Result<(ModelParams, String)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok((decode_checkpoint(&bytes, path)?, checkpoint_id(&bytes)))
}
