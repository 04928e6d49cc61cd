//! Named-array checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "LICAFCKP"
//! version u32      1
//! meta    u64 length + UTF-8 text (model configuration, `key = value` lines)
//! count   u64
//! count × { name: u32 length + UTF-8
//!           dtype: u8 (0 = f32, 1 = f64)
//!           rank: u32, dims: rank × u64
//!           data: raw little-endian element bytes, row-major }
//! ```

use std::fs;
use std::path::Path;

use candle_core::{DType, Device, Tensor};

use super::config::{model_from_text, model_to_text};
use crate::error::{Error, Result};
use crate::model::{Licaf, ModelConfig};

const MAGIC: &[u8; 8] = b"LICAFCKP";
const VERSION: u32 = 1;

pub struct Checkpoint {
    pub meta: String,
    pub tensors: Vec<(String, Tensor)>,
}

pub fn encode(meta: &str, tensors: &[(String, Tensor)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let tag = match t.dtype() {
            DType::F32 => 0u8,
            DType::F64 => 1u8,
            d => return Err(Error::Checkpoint(format!("unsupported dtype {d:?} for {name}"))),
        };
        out.push(tag);
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.dims() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        let flat = t.flatten_all()?;
        match tag {
            0 => flat.to_vec1::<f32>()?.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            _ => flat.to_vec1::<f64>()?.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn text(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("non-UTF-8 text".into()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let meta_len = r.u64()? as usize;
    let meta = r.text(meta_len)?;
    let count = r.u64()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = r.text(name_len)?;
        let tag = r.take(1)?[0];
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let t = match tag {
            0 => {
                let v = r.take(4 * n)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4"))).collect::<Vec<_>>();
                Tensor::from_vec(v, dims, &Device::Cpu)?
            }
            1 => {
                let v = r.take(8 * n)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect::<Vec<_>>();
                Tensor::from_vec(v, dims, &Device::Cpu)?
            }
            t => return Err(Error::Checkpoint(format!("unknown dtype tag {t} for {name}"))),
        };
        tensors.push((name, t));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint { meta, tensors })
}

pub fn save(path: &Path, model: &Licaf) -> Result<()> {
    let bytes = encode(&model_to_text(model.config()), &model.store().named_tensors())?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Rebuild a model from a checkpoint written by [`save`].
pub fn load(path: &Path) -> Result<Licaf> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt = decode(&bytes)?;
    let config: ModelConfig = model_from_text(&ckpt.meta)?;
    let dtype = ckpt.tensors.first().map_or(DType::F32, |(_, t)| t.dtype());
    let model = Licaf::new(config, dtype, 0)?;
    model.store().load(&ckpt.tensors)?;
    Ok(model)
}
