//! Checkpoint serialization.
//!
//! Layout: magic "VARSCKPT", u32 format version, a length-prefixed JSON
//! block holding the config and loss trace, a u32 tensor count followed by
//! per-tensor records (u32 name length, name bytes, u32 rank, u32 dims,
//! little-endian f64 payload), and a trailing CRC32 over all preceding
//! bytes. All integers are little-endian. Serialization is deterministic,
//! so save -> load -> save reproduces the file byte for byte.

use super::{EpochLoss, TrainConfig};
use crate::error::{Result, VarsError};
use crate::model::ModelState;
use crate::numerics::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"VARSCKPT";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    /// Named parameter tensors in canonical model order; classifier-head
    /// tensors (names under "head.") follow when a head has been fit.
    pub tensors: Vec<(String, Tensor)>,
    pub loss_trace: Vec<EpochLoss>,
    /// Present when the checkpoint carries a fitted classifier head.
    pub head: Option<crate::classify::HeadInfo>,
}

#[derive(Serialize, Deserialize)]
struct JsonBlock {
    config: TrainConfig,
    loss_trace: Vec<EpochLoss>,
    #[serde(default)]
    head: Option<crate::classify::HeadInfo>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn has_head(&self) -> bool {
        self.tensors.iter().any(|(n, _)| n.starts_with("head."))
    }

    /// Rebuilds the pretraining model from the stored tensors.
    pub fn model(&self) -> Result<ModelState> {
        let core: Vec<(String, Tensor)> = self
            .tensors
            .iter()
            .filter(|(n, _)| !n.starts_with("head."))
            .cloned()
            .collect();
        ModelState::from_named(
            self.config.interval_len,
            self.config.hidden,
            self.config.num_heads,
            self.config.cond_dim,
            &core,
        )
    }
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn checkpoint_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(&JsonBlock {
        config: ckpt.config.clone(),
        loss_trace: ckpt.loss_trace.clone(),
        head: ckpt.head.clone(),
    })
    .map_err(|e| VarsError::format("checkpoint config", e.to_string()))?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_u32(&mut out, ckpt.version);
    push_u32(&mut out, json.len() as u32);
    out.extend_from_slice(&json);
    push_u32(&mut out, ckpt.tensors.len() as u32);
    for (name, tensor) in &ckpt.tensors {
        push_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        push_u32(&mut out, tensor.shape().len() as u32);
        for &dim in tensor.shape() {
            push_u32(&mut out, dim as u32);
        }
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    push_u32(&mut out, crc);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    source: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(VarsError::format(
                self.source,
                format!(
                    "truncated: needed {n} bytes for {what} at offset {}, only {} remain",
                    self.pos,
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8], source: &str) -> Result<Checkpoint> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        source,
    };
    let magic = cur.take(MAGIC.len(), "magic")?;
    if magic != MAGIC {
        return Err(VarsError::format(
            source,
            format!("bad magic bytes at offset 0: {magic:02x?}"),
        ));
    }
    let version = cur.u32("version")?;
    if version > CHECKPOINT_VERSION {
        return Err(VarsError::format(
            source,
            format!(
                "unsupported checkpoint version {version}; this build reads up to {CHECKPOINT_VERSION}"
            ),
        ));
    }

    let json_len = cur.u32("config length")? as usize;
    let json_bytes = cur.take(json_len, "config block")?;
    let tensor_count = cur.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(tensor_count);
    for idx in 0..tensor_count {
        let name_len = cur.u32("tensor name length")? as usize;
        let name_bytes = cur.take(name_len, "tensor name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| {
                VarsError::format(source, format!("tensor {idx} name is not valid UTF-8"))
            })?
            .to_string();
        let rank = cur.u32("tensor rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32("tensor dim")? as usize);
        }
        let len: usize = dims.iter().product();
        let payload = cur.take(len * 8, &format!("tensor {name} payload"))?;
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect();
        tensors.push((name, Tensor::new(dims, data)?));
    }
    let stored_crc = cur.u32("checksum")?;
    if cur.pos != bytes.len() {
        return Err(VarsError::format(
            source,
            format!("{} trailing bytes after checksum", bytes.len() - cur.pos),
        ));
    }
    let computed = crc32fast::hash(&bytes[..bytes.len() - 4]);
    if stored_crc != computed {
        return Err(VarsError::format(
            source,
            format!("checksum mismatch: stored {stored_crc:08x}, computed {computed:08x}"),
        ));
    }

    let block: JsonBlock = serde_json::from_slice(json_bytes)
        .map_err(|e| VarsError::format(source, format!("config block: {e}")))?;
    Ok(Checkpoint {
        version,
        config: block.config,
        tensors,
        loss_trace: block.loss_trace,
        head: block.head,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(ckpt)?;
    std::fs::write(path, bytes).map_err(|e| VarsError::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| VarsError::io(path.display().to_string(), e))?;
    checkpoint_from_bytes(&bytes, &path.display().to_string())
}
