//! Binary parameter container.
//!
//! Layout: the 8-byte magic `HYFICKPT`, a little-endian `u64` header length,
//! a JSON header listing every tensor (name, shape, byte offset, SHA-256 of
//! its bytes) plus free-form metadata, then the tensors as little-endian
//! `f64` in row-major order.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{
    Activation, EncoderLayer, EncoderParameters, ModelParameters, ProjectionHead, ProjectionParameters,
};
use crate::error::{HyfiError, Result};
use crate::evaluation::hex;

const MAGIC: &[u8; 8] = b"HYFICKPT";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    activation: Activation,
    tensors: Vec<TensorEntry>,
    metadata: serde_json::Value,
}

fn digest(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Write `params` and `metadata` to `path`.
pub fn save_checkpoint(path: &Path, params: &ModelParameters, metadata: &serde_json::Value) -> Result<()> {
    let mut data = Vec::with_capacity(params.num_scalars() * 8);
    let mut tensors = Vec::new();
    for (name, t) in params.tensors() {
        let offset = data.len();
        for v in t.iter() {
            data.extend_from_slice(&v.to_le_bytes());
        }
        tensors.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            offset,
            sha256: digest(&data[offset..]),
        });
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        activation: params.encoder.activation,
        tensors,
        metadata: metadata.clone(),
    };
    let header = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(16 + header.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    fs::write(path, out).map_err(|e| HyfiError::io(path, e))
}

/// Read a checkpoint, verifying every tensor hash.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParameters, serde_json::Value)> {
    let bytes = fs::read(path).map_err(|e| HyfiError::io(path, e))?;
    let fail = |message: String| HyfiError::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(fail("not a checkpoint file (bad magic)".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let data_start = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| fail("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(&bytes[16..data_start]).map_err(|e| fail(format!("unreadable header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(fail(format!("unsupported format version {}", header.format_version)));
    }
    let data = &bytes[data_start..];

    let mut tensors = std::collections::HashMap::new();
    for t in &header.tensors {
        let len: usize = t.shape.iter().product();
        let end = t
            .offset
            .checked_add(len * 8)
            .filter(|&e| e <= data.len())
            .ok_or_else(|| fail(format!("tensor {} is truncated", t.name)))?;
        let raw = &data[t.offset..end];
        if digest(raw) != t.sha256 {
            return Err(fail(format!("tensor {} failed its integrity check", t.name)));
        }
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.insert(t.name.clone(), (t.shape.clone(), values));
    }

    let mut take = |name: String| {
        tensors
            .remove(&name)
            .ok_or_else(|| fail(format!("tensor {name} is missing")))
    };
    let mut matrix = |name: String| -> Result<Array2<f64>> {
        let (shape, v) = take(name.clone())?;
        match shape.as_slice() {
            [r, c] => Ok(Array2::from_shape_vec((*r, *c), v).expect("length checked")),
            _ => Err(fail(format!("tensor {name} should be a matrix"))),
        }
    };
    let num_layers = header
        .tensors
        .iter()
        .filter(|t| t.name.ends_with(".edge_weight") && t.name.starts_with("encoder."))
        .count();
    if num_layers == 0 {
        return Err(fail("no encoder layers".into()));
    }
    let mut weights = Vec::new();
    for k in 0..num_layers {
        weights.push((
            matrix(format!("encoder.{k}.edge_weight"))?,
            matrix(format!("encoder.{k}.node_weight"))?,
        ));
    }
    let heads: Vec<(Array2<f64>, Array2<f64>)> = ["node", "edge"]
        .iter()
        .map(|h| {
            Ok((
                matrix(format!("head.{h}.weight1"))?,
                matrix(format!("head.{h}.weight2"))?,
            ))
        })
        .collect::<Result<_>>()?;

    let mut vector = |name: String| -> Result<Array1<f64>> {
        let (shape, v) = tensors
            .remove(&name)
            .ok_or_else(|| fail(format!("tensor {name} is missing")))?;
        if shape.len() != 1 {
            return Err(fail(format!("tensor {name} should be a vector")));
        }
        Ok(Array1::from(v))
    };
    let mut layers = Vec::new();
    for (k, (edge_weight, node_weight)) in weights.into_iter().enumerate() {
        layers.push(EncoderLayer {
            edge_weight,
            edge_bias: vector(format!("encoder.{k}.edge_bias"))?,
            node_weight,
            node_bias: vector(format!("encoder.{k}.node_bias"))?,
            slope: vector(format!("encoder.{k}.slope"))?,
        });
    }
    let mut heads = heads.into_iter().zip(["node", "edge"]).map(|((w1, w2), h)| {
        Ok(ProjectionHead {
            weight1: w1,
            bias1: vector(format!("head.{h}.bias1"))?,
            weight2: w2,
            bias2: vector(format!("head.{h}.bias2"))?,
        })
    });
    let node = heads.next().expect("two heads")?;
    let edge = heads.next().expect("two heads")?;
    drop(heads);
    if let Some(extra) = tensors.keys().next() {
        return Err(fail(format!("unexpected tensor {extra}")));
    }
    let params = ModelParameters {
        encoder: EncoderParameters {
            layers,
            activation: header.activation,
        },
        projection: ProjectionParameters { node, edge },
    };
    params
        .encoder
        .validate()
        .map_err(|e| fail(format!("inconsistent shapes: {e}")))?;
    Ok((params, header.metadata))
}
