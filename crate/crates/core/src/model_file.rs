//! Binary model file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CVB1"  u32 version
//! u32 descriptor_len, descriptor (UTF-8 config JSON)
//! u32 tensor_count
//! per tensor: u32 name_len, name, u32 rank, u64 dims[rank], f64 values[prod(dims)]
//! 32-byte SHA-256 of everything above
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::backbone::{CnnConfig, ModelParams};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CVB1";
pub const VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(params.flat_view().len() * 8 + 1024);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let descriptor = params.config().descriptor();
    out.extend_from_slice(&(descriptor.len() as u32).to_le_bytes());
    out.extend_from_slice(descriptor.as_bytes());
    let tensors: Vec<_> = params.tensors().collect();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (spec, values) in tensors {
        out.extend_from_slice(&(spec.name.len() as u32).to_le_bytes());
        out.extend_from_slice(spec.name.as_bytes());
        out.extend_from_slice(&(spec.shape.len() as u32).to_le_bytes());
        for d in &spec.shape {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Corrupt("unexpected end of data".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn text(&mut self) -> Result<&'a str> {
        let n = self.u32()? as usize;
        std::str::from_utf8(self.take(n)?).map_err(|_| Error::Corrupt("invalid UTF-8".into()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < MAGIC.len() + 4 + CHECKSUM_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Corrupt("missing CVB1 header".into()));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(Error::Corrupt("checksum mismatch (truncated or modified file)".into()));
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Corrupt(format!("unsupported format version {version}")));
    }
    let config = CnnConfig::from_descriptor(r.text()?)?;
    let specs = config.tensor_specs();
    let count = r.u32()? as usize;
    if count != specs.len() {
        return Err(Error::Corrupt(format!(
            "{count} tensors, config describes {}",
            specs.len()
        )));
    }
    let mut values = vec![0.0; config.param_count()];
    for spec in &specs {
        let name = r.text()?;
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if name != spec.name || dims != spec.shape {
            return Err(Error::Corrupt(format!(
                "tensor '{name}' {dims:?} where '{}' {:?} was expected",
                spec.name, spec.shape
            )));
        }
        let raw = r.take(spec.len * 8)?;
        for (slot, chunk) in values[spec.offset..spec.offset + spec.len].iter_mut().zip(raw.chunks_exact(8)) {
            *slot = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if r.pos != body.len() {
        return Err(Error::Corrupt("trailing bytes after the last tensor".into()));
    }
    ModelParams::from_flat(config, values)
}

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    std::fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Corrupt(msg) => Error::Corrupt(format!("{}: {msg}", path.display())),
        other => other,
    })
}
