//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! "PAATCKPT"  u32 version  u32 tensor_count
//! per tensor: u16 name_len, name (UTF-8), u8 rank, rank x u64 dims, f64 values (row-major)
//! u32 config_len, config (UTF-8 key=value lines)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::model::params::ParamStore;
use crate::model::{PaatConfig, PaatModel};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 8] = b"PAATCKPT";
pub const VERSION: u32 = 1;

pub fn encode_checkpoint(model: &PaatModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for t in model.params.tensors() {
        let name = t.name.as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("tensor name {} too long", t.name)))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(2);
        out.extend_from_slice(&(t.value.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.value.cols() as u64).to_le_bytes());
        for v in t.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let config = model.config.to_kv().to_text();
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!("truncated while reading {what} at byte {}", self.pos))),
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

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Decodes a checkpoint. Nothing is returned unless the whole buffer is valid.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<PaatModel> {
    let (config, tensors) = decode_parts(bytes)?;
    let params = ParamStore::from_tensors(&config, tensors)?;
    Ok(PaatModel { config, params })
}

fn decode_parts(bytes: &[u8]) -> Result<(PaatConfig, Vec<(String, Matrix)>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Format("bad magic bytes; not a checkpoint".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}, expected {VERSION}")));
    }
    let count = r.u32("tensor count")?;
    let mut tensors = Vec::new();
    for i in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| Error::Format(format!("tensor {i} name is not UTF-8")))?
            .to_string();
        let rank = r.u8("rank")?;
        let dims = (0..rank).map(|_| r.u64("dims")).collect::<Result<Vec<_>>>()?;
        let (rows, cols) = match dims[..] {
            [c] => (1, c),
            [rows, cols] => (rows, cols),
            _ => return Err(Error::Format(format!("tensor {name} has unsupported rank {rank}"))),
        };
        let n = rows
            .checked_mul(cols)
            .and_then(|n| usize::try_from(n).ok())
            .and_then(|n| n.checked_mul(8).map(|_| n))
            .ok_or_else(|| Error::Format(format!("tensor {name} is too large")))?;
        let raw = r.take(n * 8, "tensor values")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let value = Matrix::new(rows as usize, cols as usize, data)
            .map_err(|e| Error::Format(format!("tensor {name}: {e}")))?;
        tensors.push((name, value));
    }
    let len = r.u32("config length")? as usize;
    let text = std::str::from_utf8(r.take(len, "config")?).map_err(|_| Error::Format("config is not UTF-8".into()))?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let kv = KvMap::parse(text).map_err(|e| Error::Format(format!("embedded config: {e}")))?;
    let config = PaatConfig::from_kv(&kv).map_err(|e| Error::Format(format!("embedded config: {e}")))?;
    Ok((config, tensors))
}

pub fn save_checkpoint(model: &PaatModel, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<PaatModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads the tensors of a checkpoint under `config`, which must build
/// tensors of exactly the stored shapes.
pub fn load_checkpoint_as(path: &Path, config: &PaatConfig) -> Result<PaatModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (_, tensors) = decode_parts(&bytes)?;
    config.validate()?;
    let params = ParamStore::from_tensors(config, tensors)?;
    Ok(PaatModel {
        config: config.clone(),
        params,
    })
}
