//! Binary tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! per tensor:  "JLT1" | dtype u8 | rank u8 | dims u64 × rank | f32 payload
//! index:       JSON {"meta": …, "tensors": [{"name", "offset", "dims"}]}
//! footer:      index length u64 | "JLTX"
//! ```

use std::path::Path;

use jamlab::nn::Tensor;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{read_file, write_file, CliError, Result};

pub const MAGIC: &[u8; 4] = b"JLT1";
pub const FOOTER_MAGIC: &[u8; 4] = b"JLTX";
pub const DTYPE_F32: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub name: String,
    /// Byte offset of the tensor's magic.
    pub offset: u64,
    pub dims: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Index {
    meta: Value,
    tensors: Vec<IndexEntry>,
}

/// Decoded file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub meta: Value,
    pub tensors: Vec<(String, Tensor<f32>)>,
    pub index: Vec<IndexEntry>,
}

impl Container {
    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

/// Size of the fixed header preceding a payload of the given rank.
pub fn header_len(rank: usize) -> u64 {
    (4 + 1 + 1 + 8 * rank) as u64
}

pub fn encode(meta: &Value, tensors: &[(String, Tensor<f32>)]) -> std::result::Result<Vec<u8>, String> {
    let mut out = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for (i, (name, t)) in tensors.iter().enumerate() {
        if tensors[..i].iter().any(|(n, _)| n == name) {
            return Err(format!("duplicate tensor name {name:?}"));
        }
        if t.shape.len() > u8::MAX as usize {
            return Err(format!("tensor {name:?} has rank {}", t.shape.len()));
        }
        if t.shape.iter().product::<usize>() != t.data.len() {
            return Err(format!("tensor {name:?} shape does not match its data"));
        }
        entries.push(IndexEntry {
            name: name.clone(),
            offset: out.len() as u64,
            dims: t.shape.iter().map(|&d| d as u64).collect(),
        });
        out.extend_from_slice(MAGIC);
        out.push(DTYPE_F32);
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let index = serde_json::to_vec(&Index { meta: meta.clone(), tensors: entries }).map_err(|e| e.to_string())?;
    out.extend_from_slice(&index);
    out.extend_from_slice(&(index.len() as u64).to_le_bytes());
    out.extend_from_slice(FOOTER_MAGIC);
    Ok(out)
}

fn u64_at(bytes: &[u8], at: usize) -> std::result::Result<u64, String> {
    bytes
        .get(at..at + 8)
        .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
        .ok_or_else(|| format!("truncated integer at byte {at}"))
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Container, String> {
    let n = bytes.len();
    if n < 12 || &bytes[n - 4..] != FOOTER_MAGIC {
        return Err("missing container footer".into());
    }
    let index_len = u64_at(bytes, n - 12)? as usize;
    let index_start = (n - 12).checked_sub(index_len).ok_or("index longer than file")?;
    let index: Index = serde_json::from_slice(&bytes[index_start..n - 12]).map_err(|e| format!("index: {e}"))?;
    let mut tensors = Vec::with_capacity(index.tensors.len());
    let mut cursor = 0usize;
    for e in &index.tensors {
        let at = e.offset as usize;
        if at != cursor {
            return Err(format!("tensor {:?} at byte {at}, expected {cursor}", e.name));
        }
        if bytes.get(at..at + 4) != Some(MAGIC.as_slice()) {
            return Err(format!("bad magic for tensor {:?}", e.name));
        }
        if bytes.get(at + 4) != Some(&DTYPE_F32) {
            return Err(format!("unsupported dtype for tensor {:?}", e.name));
        }
        let rank = *bytes.get(at + 5).ok_or("truncated header")? as usize;
        if rank != e.dims.len() {
            return Err(format!("tensor {:?} rank {rank} disagrees with index", e.name));
        }
        let mut dims = Vec::with_capacity(rank);
        for k in 0..rank {
            dims.push(u64_at(bytes, at + 6 + 8 * k)?);
        }
        if dims != e.dims {
            return Err(format!("tensor {:?} dims disagree with index", e.name));
        }
        let count = dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d)).ok_or("dimension overflow")? as usize;
        let start = at + header_len(rank) as usize;
        let end = count.checked_mul(4).and_then(|b| b.checked_add(start)).ok_or("payload overflow")?;
        if end > index_start {
            return Err(format!("payload of tensor {:?} runs past the index", e.name));
        }
        let data = bytes[start..end].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        let shape = dims.iter().map(|&d| d as usize).collect();
        tensors.push((e.name.clone(), Tensor { shape, data }));
        cursor = end;
    }
    if cursor != index_start {
        return Err("unindexed bytes before the index".into());
    }
    Ok(Container { meta: index.meta, tensors, index: index.tensors })
}

pub fn write_container(path: impl AsRef<Path>, meta: &Value, tensors: &[(String, Tensor<f32>)]) -> Result<()> {
    let bytes = encode(meta, tensors).map_err(|r| CliError::format(&path, r))?;
    write_file(path, &bytes)
}

pub fn read_container(path: impl AsRef<Path>) -> Result<Container> {
    let bytes = read_file(&path)?;
    decode(&bytes).map_err(|r| CliError::format(&path, r))
}
