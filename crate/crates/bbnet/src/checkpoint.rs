//! The `BBNET1` parameter checkpoint.
//!
//! Little-endian layout:
//!
//! ```text
//! magic    "BBNET1"
//! version  u8 (= 1)
//! count    u32
//! records  count x (name_len u32, name UTF-8, rank u32, rank x dim u32,
//!          prod(dims) f32)
//! ```

use std::fs;
use std::path::Path;

use bbnet_core::model::{ModelConfig, Network};
use bbnet_core::neural::{ParamEntry, Tensor};

use crate::bytes::Reader;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"BBNET1";
pub const CHECKPOINT_VERSION: u8 = 1;

/// A named tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor<f32>,
}

pub fn encode_checkpoint(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let len32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Usage(format!("{what} {v} exceeds the u32 range")))
    };
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&len32(tensors.len(), "tensor count")?.to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&len32(t.name.len(), "name length")?.to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        let shape = t.tensor.shape();
        out.extend_from_slice(&len32(shape.len(), "rank")?.to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&len32(d, "dimension")?.to_le_bytes());
        }
        for &v in t.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut r = Reader::new(bytes);
    let magic = r.take(6, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected \"BBNET1\"")));
    }
    let version = r.u8("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(6, format!("unsupported version {version}")));
    }
    let count = r.u32("tensor count")? as usize;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let name = r.string(len, "tensor name")?;
        let rank_at = r.offset();
        let rank = r.u32("rank")? as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::format(rank_at, format!("tensor {name} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::format(rank_at, format!("tensor {name} has shape {shape:?}")))?;
        let data = r.f32s(numel, "tensor values")?;
        let tensor = Tensor::new(&shape, data)?;
        out.push(NamedTensor { name, tensor });
    }
    r.finish()?;
    Ok(out)
}

/// Every tensor of `network`, in parameter order.
pub fn network_tensors(network: &Network<f32>) -> Vec<NamedTensor> {
    network
        .params()
        .entries()
        .iter()
        .map(|e| NamedTensor {
            name: e.name.clone(),
            tensor: e.tensor.clone(),
        })
        .collect()
}

pub fn save_checkpoint(network: &Network<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(&network_tensors(network))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Vec<NamedTensor>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Rebuilds the network described by `config` with the checkpoint's
/// weights; names and shapes must match exactly.
pub fn load_checkpoint(config: &ModelConfig, path: impl AsRef<Path>) -> Result<Network<f32>> {
    let entries: Vec<ParamEntry<f32>> = read_checkpoint(path)?
        .into_iter()
        .map(|t| ParamEntry {
            name: t.name,
            tensor: t.tensor,
            trainable: false,
        })
        .collect();
    Ok(Network::from_entries(config, &entries)?)
}
