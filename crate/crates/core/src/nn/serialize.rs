//! Binary model container.
//!
//! Layout: `b"AVSD"`, `u32` version, `u64` header length, UTF-8 JSON header,
//! then every parameter tensor as little-endian `f64` in declaration order.
//! All integers are little-endian.

use super::graph::{GraphSpec, ModelGraph};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"AVSD";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    architecture: GraphSpec,
    params: Vec<ParamEntry>,
    meta: serde_json::Value,
}

/// Serialises `graph` with caller metadata (model kind, feature contract...).
pub fn encode(graph: &ModelGraph, meta: &serde_json::Value) -> Vec<u8> {
    let header = Header {
        architecture: graph.spec().clone(),
        params: graph
            .params()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(16 + json.len() + graph.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in graph.params() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses a model container; `path` is only used in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<(ModelGraph, serde_json::Value)> {
    let fmt = |offset: usize, msg: &str| Error::format(path, offset as u64, msg);
    if bytes.len() < 16 {
        return Err(fmt(bytes.len(), "truncated preamble"));
    }
    if &bytes[..4] != MAGIC {
        return Err(fmt(0, "bad magic, expected AVSD"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(fmt(4, &format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| fmt(16, "header length exceeds file"))?;
    let header: Header =
        serde_json::from_slice(&bytes[16..body]).map_err(|e| fmt(16, &format!("bad header: {e}")))?;
    let mut graph = ModelGraph::new(header.architecture).map_err(|e| fmt(16, &e.to_string()))?;
    let declared: Vec<(String, Vec<usize>)> = graph
        .params()
        .map(|p| (p.name.clone(), p.value.shape().to_vec()))
        .collect();
    if declared.len() != header.params.len()
        || declared
            .iter()
            .zip(&header.params)
            .any(|((n, s), e)| *n != e.name || *s != e.shape)
    {
        return Err(fmt(16, "parameter table does not match architecture"));
    }
    let mut offset = body;
    for p in graph.params_mut() {
        let need = p.value.len() * 8;
        if offset + need > bytes.len() {
            return Err(fmt(offset, &format!("truncated blob for {}", p.name)));
        }
        for (v, chunk) in p.value.data_mut().iter_mut().zip(bytes[offset..offset + need].chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        offset += need;
    }
    if offset != bytes.len() {
        return Err(fmt(offset, "trailing bytes after last parameter"));
    }
    Ok((graph, header.meta))
}

pub fn save(graph: &ModelGraph, meta: &serde_json::Value, path: &Path) -> Result<()> {
    std::fs::write(path, encode(graph, meta)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(ModelGraph, serde_json::Value)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
