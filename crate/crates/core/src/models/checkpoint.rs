//! Binary checkpoint container.
//!
//! Layout: `MCFCKPT\0`, format version (u32 LE), header length (u64 LE), a
//! UTF-8 JSON header, then every tensor as little-endian f64 in header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameterized;
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MCFCKPT\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Fusion,
    ImageOnly,
    Mlp,
    ParallelFusion,
    Ols,
    Gp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in values.
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
    /// Standardization statistics, training history and similar metadata.
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub payload: Vec<f64>,
}

impl Checkpoint {
    pub fn new(kind: ModelKind, config: serde_json::Value, extra: serde_json::Value) -> Self {
        Self {
            header: CheckpointHeader {
                kind,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                config,
                tensors: Vec::new(),
                extra,
            },
            payload: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], values: impl IntoIterator<Item = f64>) {
        let offset = self.payload.len();
        self.payload.extend(values);
        self.header.tensors.push(TensorEntry {
            name: name.into(),
            shape: shape.to_vec(),
            offset,
            len: self.payload.len() - offset,
        });
    }

    pub fn from_model<T: Scalar, M: Parameterized<T>>(
        kind: ModelKind,
        config: serde_json::Value,
        model: &M,
        extra: serde_json::Value,
    ) -> Self {
        let mut ck = Self::new(kind, config, extra);
        for p in model.params() {
            ck.push(p.name.clone(), &p.shape, p.value.iter().map(|v| v.to_f64_lossy()));
        }
        ck
    }

    pub fn tensor(&self, name: &str) -> Result<(&[usize], &[f64])> {
        let e = self
            .header
            .tensors
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name} missing")))?;
        Ok((&e.shape, &self.payload[e.offset..e.offset + e.len]))
    }

    /// Copies stored tensors into `model`; names and shapes must match exactly.
    pub fn load_into<T: Scalar, M: Parameterized<T>>(&self, model: &mut M) -> Result<()> {
        let params = model.params_mut();
        if params.len() != self.header.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "model has {} tensors, checkpoint has {}",
                params.len(),
                self.header.tensors.len()
            )));
        }
        for (p, e) in params.into_iter().zip(&self.header.tensors) {
            if p.name != e.name || p.shape != e.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor mismatch: model {} {:?}, checkpoint {} {:?}",
                    p.name, p.shape, e.name, e.shape
                )));
            }
            for (v, &s) in p.value.iter_mut().zip(&self.payload[e.offset..e.offset + e.len]) {
                *v = T::of(s);
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(20 + header.len() + 8 * self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let mut b4 = [0u8; 4];
        read_exact(&mut r, &mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let mut b8 = [0u8; 8];
        read_exact(&mut r, &mut b8)?;
        let hlen = u64::from_le_bytes(b8) as usize;
        if r.len() < hlen {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let header: CheckpointHeader = serde_json::from_slice(&r[..hlen])?;
        r = &r[hlen..];
        let total: usize = header.tensors.iter().map(|e| e.len).sum();
        if r.len() != total * 8 {
            return Err(Error::Checkpoint(format!("payload has {} bytes, expected {}", r.len(), total * 8)));
        }
        let payload = r
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self { header, payload })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::CheckpointNotFound(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("truncated checkpoint".into()))
}
