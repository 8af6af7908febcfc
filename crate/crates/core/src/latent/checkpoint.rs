//! Model checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                              |
//! |--------------|------------------------------------------------------|
//! | 8            | magic `LSLMCKPT`                                     |
//! | 4            | format version (`u32`)                               |
//! | 8            | metadata length `n` (`u64`)                          |
//! | n            | UTF-8 JSON [`CheckpointMeta`]                        |
//! | 8 · P        | parameters, `f64`, in [`ModelParams`] storage order  |
//! | 16 · P       | optional Adam first then second moments              |
//!
//! `P` is the parameter count recorded in the metadata; the metadata also lists
//! every tensor's name and offset.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Architecture, ModelParams};
use super::train::{AdamState, EpochLog, TrainConfig};
use crate::error::{Error, Result};
use crate::io::write_atomic;

const MAGIC: &[u8; 8] = b"LSLMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub architecture: Architecture,
    pub parameter_count: usize,
    pub tensors: Vec<TensorInfo>,
    pub train_config: Option<TrainConfig>,
    pub epochs_done: usize,
    pub final_epoch: Option<EpochLog>,
    pub adam_step: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub train_config: Option<TrainConfig>,
    pub epochs_done: usize,
    pub final_epoch: Option<EpochLog>,
    pub adam: Option<AdamState>,
}

impl Checkpoint {
    pub fn new(params: ModelParams) -> Self {
        Self {
            params,
            train_config: None,
            epochs_done: 0,
            final_epoch: None,
            adam: None,
        }
    }

    fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            version: CHECKPOINT_VERSION,
            architecture: self.params.architecture().clone(),
            parameter_count: self.params.len(),
            tensors: self
                .params
                .tensor_names()
                .into_iter()
                .map(|(name, r)| TensorInfo {
                    name,
                    offset: r.start,
                    len: r.len(),
                })
                .collect(),
            train_config: self.train_config.clone(),
            epochs_done: self.epochs_done,
            final_epoch: self.final_epoch,
            adam_step: self.adam.as_ref().map(|a| a.step),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.meta()).expect("checkpoint metadata serialises");
        let n = self.params.len();
        let extra = if self.adam.is_some() { 2 * n } else { 0 };
        let mut out = Vec::with_capacity(20 + meta.len() + 8 * (n + extra));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        let mut put = |vals: &[f64]| {
            for v in vals {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        put(self.params.values());
        if let Some(adam) = &self.adam {
            put(&adam.m);
            put(&adam.v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::format(path, msg);
        let mut cur = Reader { bytes, pos: 0 };
        if cur.take(8).ok_or_else(|| bad("truncated header"))? != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(
            cur.take(4)
                .ok_or_else(|| bad("truncated header"))?
                .try_into()
                .unwrap(),
        );
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let meta_len = u64::from_le_bytes(
            cur.take(8)
                .ok_or_else(|| bad("truncated header"))?
                .try_into()
                .unwrap(),
        ) as usize;
        let meta_bytes = cur.take(meta_len).ok_or_else(|| bad("truncated metadata"))?;
        let meta: CheckpointMeta = serde_json::from_slice(meta_bytes)
            .map_err(|e| bad(&format!("metadata: {e}")))?;
        if meta.version != version {
            return Err(bad("metadata version disagrees with header"));
        }
        let n = meta.parameter_count;
        let values = cur.f64s(n).ok_or_else(|| bad("truncated parameters"))?;
        let params = ModelParams::from_values(meta.architecture.clone(), values)?;
        let adam = match meta.adam_step {
            Some(step) => {
                let m = cur.f64s(n).ok_or_else(|| bad("truncated optimizer state"))?;
                let v = cur.f64s(n).ok_or_else(|| bad("truncated optimizer state"))?;
                Some(AdamState { step, m, v })
            }
            None => None,
        };
        if cur.pos != bytes.len() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self {
            params,
            train_config: meta.train_config,
            epochs_done: meta.epochs_done,
            final_epoch: meta.final_epoch,
            adam,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn f64s(&mut self, n: usize) -> Option<Vec<f64>> {
        let raw = self.take(n.checked_mul(8)?)?;
        Some(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    }
}
