//! Weight file: magic `TMWEIGHT`, u32 version, u32 header length, a JSON
//! header (config, config hash, tensor table), then every tensor as
//! little-endian f32 in table order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{NetConfig, Network};
use super::Model;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"TMWEIGHT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightHeader {
    pub config: NetConfig,
    pub config_hash: String,
    pub tensors: Vec<TensorEntry>,
}

/// Trainable parameters followed by the normalization running statistics.
fn tensors(net: &Model) -> Vec<(String, &Vec<f32>)> {
    let mut v: Vec<(String, &Vec<f32>)> = net.param_names().into_iter().zip(net.params()).collect();
    for (b, (_, bn)) in net.blocks.iter().enumerate() {
        v.push((format!("block{b}.bn.running_mean"), &bn.running_mean));
        v.push((format!("block{b}.bn.running_var"), &bn.running_var));
    }
    v
}

fn tensors_mut(net: &mut Model) -> Vec<&mut Vec<f32>> {
    let mut stats = Vec::new();
    let mut v = Vec::new();
    for (conv, bn) in &mut net.blocks {
        v.push(&mut conv.weight);
        v.push(&mut conv.bias);
        v.push(&mut bn.gamma);
        v.push(&mut bn.beta);
        stats.push(&mut bn.running_mean);
        stats.push(&mut bn.running_var);
    }
    v.push(&mut net.head.weight);
    v.push(&mut net.head.bias);
    v.extend(stats);
    v
}

pub fn encode_weights(net: &Model) -> Vec<u8> {
    let ts = tensors(net);
    let header = WeightHeader {
        config: net.config,
        config_hash: net.config.hash(),
        tensors: ts
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.clone(),
                len: t.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &ts {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_weights(bytes: &[u8], path: &Path) -> Result<Model> {
    let corrupt = |reason: String| Error::CorruptFile {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a weight file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(corrupt(format!("unsupported weight version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| corrupt("truncated header".into()))?;
    let header: WeightHeader = serde_json::from_slice(body).map_err(|e| corrupt(e.to_string()))?;
    if header.config.hash() != header.config_hash {
        return Err(corrupt("config hash mismatch".into()));
    }
    let mut net = Network::<f32>::zeros(header.config).map_err(|e| corrupt(e.to_string()))?;
    let expected: Vec<(String, usize)> = tensors(&net).into_iter().map(|(n, t)| (n, t.len())).collect();
    let found: Vec<(String, usize)> = header.tensors.iter().map(|t| (t.name.clone(), t.len)).collect();
    if expected != found {
        return Err(corrupt("tensor table does not match the configuration".into()));
    }
    let mut payload = &bytes[16 + hlen..];
    let total: usize = expected.iter().map(|(_, n)| n).sum();
    if payload.len() != 4 * total {
        return Err(corrupt(format!("payload is {} bytes, expected {}", payload.len(), 4 * total)));
    }
    for t in tensors_mut(&mut net) {
        let n = t.len();
        for (dst, chunk) in t.iter_mut().zip(payload[..4 * n].chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        payload = &payload[4 * n..];
    }
    if !net.is_finite() {
        return Err(corrupt("non-finite weights".into()));
    }
    Ok(net)
}

pub fn save_weights(path: impl AsRef<Path>, net: &Model) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_weights(net)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_round_trip() {
        let mut net = Network::<f32>::init(
            NetConfig {
                blocks: 2,
                channels_per_block: 4,
                kernel: 3,
            },
            5,
        )
        .unwrap();
        net.blocks[1].1.running_var[2] = 0.25;
        let bytes = encode_weights(&net);
        assert_eq!(decode_weights(&bytes, Path::new("mem")).unwrap(), net);
        let mut bad = bytes.clone();
        bad.pop();
        assert!(decode_weights(&bad, Path::new("mem")).is_err());
    }
}
