//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "RGZCKPT\0" | u32 version | u64 header_len | header JSON
//! u32 tensor_count | per tensor: u32 name_len, name, u32 ndim, u64 dims…, f64 data…
//! ```
//!
//! The header holds the model kind and config plus free-form metadata
//! (training config, seed). Values are stored as raw IEEE bits, so a
//! save/load cycle is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelError, ModelKind, ParamStore, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RGZCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    config: ModelConfig,
    meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: serde_json::Value,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ModelError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| ModelError::Checkpoint("length overflow".into()))
    }
}

impl Checkpoint {
    pub fn new(model: Model, meta: serde_json::Value) -> Self {
        Checkpoint { model, meta }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            kind: self.model.kind,
            config: self.model.config.clone(),
            meta: self.meta.clone(),
        })
        .expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.model.params.len() as u32).to_le_bytes());
        for (name, t) in self.model.params.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(ModelError::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = r.len()?;
        let header: Header = serde_json::from_slice(r.take(hlen)?)
            .map_err(|e| ModelError::Checkpoint(format!("header: {e}")))?;
        header.config.validate()?;
        let n = r.u32()?;
        let mut params = ParamStore::new();
        for _ in 0..n {
            let nl = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(nl)?)
                .map_err(|_| ModelError::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| ModelError::Checkpoint("size overflow".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
                .collect();
            params.insert(name, Tensor::new(shape, data)?);
        }
        if r.pos != buf.len() {
            return Err(ModelError::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        let model = Model {
            kind: header.kind,
            config: header.config,
            params,
        };
        model.check_shapes()?;
        Ok(Checkpoint { model, meta: header.meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let buf = std::fs::read(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&buf)
    }
}

impl Model {
    /// Verifies parameter names and shapes against a fresh initialization of the same config.
    pub fn check_shapes(&self) -> Result<()> {
        let reference = Model::init(self.kind, self.config.clone(), 0)?;
        for (name, t) in reference.params.iter() {
            match self.params.get(name) {
                None => return Err(ModelError::MissingParam(name.clone())),
                Some(have) if have.shape() != t.shape() => {
                    return Err(ModelError::Checkpoint(format!(
                        "{name}: shape {:?}, config expects {:?}",
                        have.shape(),
                        t.shape()
                    )))
                }
                _ => {}
            }
        }
        if let Some(extra) = self.params.names().find(|n| reference.params.get(n).is_none()) {
            return Err(ModelError::Checkpoint(format!("unexpected parameter {extra}")));
        }
        Ok(())
    }
}
