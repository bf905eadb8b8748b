//! Binary checkpoint format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic      8 bytes  "ONOMACKP"
//! version    u32      1
//! meta_len   u32
//! meta       meta_len bytes of UTF-8 JSON (see `Metadata`)
//! n_tensors  u32
//! n_tensors times:
//!   name_len u16, name (UTF-8), rows u32, cols u32, rows*cols f32 row-major
//! ```
//!
//! Tensor names are the parameter names (`embedding`, `encoder.fwd.w_x`,
//! ...), `norm.mean` and `norm.std` (1 x F), and when optimizer state is
//! saved, `opt.m.<param>` and `opt.v.<param>` for every parameter.

use std::collections::HashMap;
use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, Seq2Seq, TrainedModel};
use crate::autodiff::{OptimizerState, ParamStore, RAdamConfig};
use crate::data::NormStats;
use crate::phoneme::PhonemeInventory;
use crate::trainer::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ONOMACKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
}

impl From<ModelError> for CheckpointError {
    fn from(e: ModelError) -> Self {
        Self::Incompatible(e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimizerMeta {
    config: RAdamConfig,
    step: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Metadata {
    model: ModelConfig,
    labels: Vec<String>,
    inventory: Vec<String>,
    inventory_hash: String,
    optimizer: Option<OptimizerMeta>,
    train_config: Option<TrainConfig>,
    epoch: Option<usize>,
}

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: TrainedModel,
    pub optimizer: Option<OptimizerState<f32>>,
    pub train_config: Option<TrainConfig>,
    pub epoch: Option<usize>,
}

impl Checkpoint {
    pub fn new(model: TrainedModel) -> Self {
        Self {
            model,
            optimizer: None,
            train_config: None,
            epoch: None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let store = self.model.model.params();
        let meta = Metadata {
            model: *self.model.model.config(),
            labels: self.model.labels.clone(),
            inventory: self.model.inventory.symbols().to_vec(),
            inventory_hash: self.model.inventory.hash(),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerMeta {
                config: o.config,
                step: o.step,
            }),
            train_config: self.train_config.clone(),
            epoch: self.epoch,
        };
        let meta = serde_json::to_vec(&meta).map_err(|e| CheckpointError::Malformed(e.to_string()))?;

        let mut tensors: Vec<(String, &Array2<f32>)> =
            store.ids().map(|id| (store.name(id).to_string(), store.value(id))).collect();
        let norm = self.model.model.norm();
        let mean = Array2::from_shape_vec((1, norm.n_bins()), norm.mean.clone())
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let std = Array2::from_shape_vec((1, norm.n_bins()), norm.std.clone())
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        tensors.push(("norm.mean".into(), &mean));
        tensors.push(("norm.std".into(), &std));
        if let Some(opt) = &self.optimizer {
            for id in store.ids() {
                tensors.push((format!("opt.m.{}", store.name(id)), &opt.m[id.index()]));
                tensors.push((format!("opt.v.{}", store.name(id)), &opt.v[id.index()]));
            }
        }

        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let meta_len = read_u32(&mut r)? as usize;
        let mut meta = vec![0u8; meta_len];
        read_exact(&mut r, &mut meta)?;
        let meta: Metadata =
            serde_json::from_slice(&meta).map_err(|e| CheckpointError::Malformed(e.to_string()))?;

        let n = read_u32(&mut r)? as usize;
        let mut order = Vec::with_capacity(n);
        let mut tensors = HashMap::with_capacity(n);
        for _ in 0..n {
            let mut len = [0u8; 2];
            read_exact(&mut r, &mut len)?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(&mut r, &mut name)?;
            let name =
                String::from_utf8(name).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            let mut raw = vec![0u8; rows * cols * 4];
            read_exact(&mut r, &mut raw)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Array2::from_shape_vec((rows, cols), values)
                .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
            if tensors.insert(name.clone(), t).is_some() {
                return Err(CheckpointError::Malformed(format!("duplicate tensor {name}")));
            }
            order.push(name);
        }
        if (r.position() as usize) != bytes.len() {
            return Err(CheckpointError::Malformed("trailing bytes".into()));
        }

        let inventory = PhonemeInventory::from_symbols(meta.inventory.clone())
            .map_err(|e| CheckpointError::Incompatible(e.to_string()))?;
        if inventory.hash() != meta.inventory_hash {
            return Err(CheckpointError::Incompatible("inventory hash mismatch".into()));
        }
        if inventory.len() != meta.model.vocab {
            return Err(CheckpointError::Incompatible(format!(
                "{} inventory symbols for vocabulary {}",
                inventory.len(),
                meta.model.vocab
            )));
        }
        if meta.model.conditioned && meta.labels.len() != meta.model.n_labels {
            return Err(CheckpointError::Incompatible(format!(
                "{} label names for {} classes",
                meta.labels.len(),
                meta.model.n_labels
            )));
        }

        let mut take = |name: &str| {
            tensors
                .remove(name)
                .ok_or_else(|| CheckpointError::Malformed(format!("missing tensor {name}")))
        };
        let mean = take("norm.mean")?.into_iter().collect();
        let std = take("norm.std")?.into_iter().collect();
        let mut store = ParamStore::<f32>::new();
        for name in order.iter().filter(|n| !n.starts_with("norm.") && !n.starts_with("opt.")) {
            store.add(name.clone(), take(name)?);
        }
        let optimizer = match &meta.optimizer {
            None => None,
            Some(o) => {
                let mut state = OptimizerState::new(o.config, &store);
                state.step = o.step;
                for id in store.ids() {
                    let name = store.name(id).to_string();
                    state.m[id.index()] = take(&format!("opt.m.{name}"))?;
                    state.v[id.index()] = take(&format!("opt.v.{name}"))?;
                }
                Some(state)
            }
        };
        if let Some(extra) = tensors.keys().next() {
            return Err(CheckpointError::Malformed(format!("unexpected tensor {extra}")));
        }
        let model = Seq2Seq::from_parts(meta.model, store, NormStats { mean, std })?;
        if let Some(opt) = &optimizer {
            for id in model.params().ids() {
                if opt.m[id.index()].dim() != model.params().value(id).dim()
                    || opt.v[id.index()].dim() != model.params().value(id).dim()
                {
                    return Err(CheckpointError::Malformed(format!(
                        "optimizer moments for {} have the wrong shape",
                        model.params().name(id)
                    )));
                }
            }
        }
        Ok(Self {
            model: TrainedModel {
                model,
                inventory,
                labels: meta.labels,
            },
            optimizer,
            train_config: meta.train_config,
            epoch: meta.epoch,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.to_bytes()?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn read_exact(r: &mut Cursor<&[u8]>, buf: &mut [u8]) -> Result<(), CheckpointError> {
    r.read_exact(buf)
        .map_err(|_| CheckpointError::Malformed("unexpected end of file".into()))
}

fn read_u32(r: &mut Cursor<&[u8]>) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
