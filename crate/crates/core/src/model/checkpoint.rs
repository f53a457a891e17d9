//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "ULCKPT\0\0"
//! version    u32
//! meta_len   u32, followed by meta_len bytes of JSON architecture metadata
//! count      u32
//! count × { name_len u32, name bytes, rank u32, rank × u64 dims, f64 payload }
//! ```
//!
//! The file must end exactly after the last payload.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use super::{ModelArchitecture, ModelParameters, NamedTensor};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MAGIC: &[u8; 8] = b"ULCKPT\0\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes(params: &ModelParameters) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let meta = serde_json::to_vec(params.architecture())?;
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(params.tensors().len() as u32).to_le_bytes());
    for t in params.tensors() {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.tensor.shape().len() as u32).to_le_bytes());
        for &d in t.tensor.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn truncated(what: &str) -> Error {
    Error::Integrity(format!("file truncated while reading {what}"))
}

fn read_u32(cur: &mut Cursor<&[u8]>, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    cur.read_exact(&mut buf).map_err(|_| truncated(what))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_bytes(cur: &mut Cursor<&[u8]>, len: usize, what: &str) -> Result<Vec<u8>> {
    let remaining = cur.get_ref().len() - cur.position() as usize;
    if len > remaining {
        return Err(truncated(what));
    }
    let mut buf = vec![0u8; len];
    cur.read_exact(&mut buf).map_err(|_| truncated(what))?;
    Ok(buf)
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelParameters> {
    let mut cur = Cursor::new(bytes);
    let mut magic = [0u8; 8];
    cur.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for checkpoint header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = read_u32(&mut cur, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let meta_len = read_u32(&mut cur, "metadata length")? as usize;
    let meta = read_bytes(&mut cur, meta_len, "metadata")?;
    let arch: ModelArchitecture =
        serde_json::from_slice(&meta).map_err(|e| Error::Format(format!("bad architecture metadata: {e}")))?;
    let count = read_u32(&mut cur, "tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let name_len = read_u32(&mut cur, "tensor name length")? as usize;
        let name = String::from_utf8(read_bytes(&mut cur, name_len, "tensor name")?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = read_u32(&mut cur, "tensor rank")? as usize;
        if rank > 2 {
            return Err(Error::Format(format!("tensor {name} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let raw = read_bytes(&mut cur, 8, "tensor shape")?;
            shape.push(u64::from_le_bytes(raw.try_into().expect("8 bytes")) as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Integrity(format!("tensor {name} shape overflows")))?;
        let payload = read_bytes(
            &mut cur,
            numel.checked_mul(8).ok_or_else(|| truncated("tensor payload"))?,
            "tensor payload",
        )?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = Tensor::new(shape, data).map_err(|e| Error::Integrity(format!("tensor {name}: {e}")))?;
        tensors.push(NamedTensor { name, tensor });
    }
    if (cur.position() as usize) != bytes.len() {
        return Err(Error::Integrity("trailing bytes after last tensor".into()));
    }
    ModelParameters::from_tensors(arch, tensors)
}

pub fn save(params: &ModelParameters, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(params)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelParameters> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
