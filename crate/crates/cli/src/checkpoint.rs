//! Model checkpoints: named parameter tensors plus an architecture header.

use std::path::Path;

use jamlab::moe::{ModelSpec, MoeModel};
use jamlab::nn::Tensor;
use serde::{Deserialize, Serialize};

use crate::config::Profile;
use crate::container::{read_container, write_container};
use crate::error::{CliError, Result};

pub const CHECKPOINT_FORMAT: &str = "jamlab-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format: String,
    pub version: u32,
    pub model: ModelSpec,
    pub profile: Profile,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub best_epoch: usize,
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &MoeModel, meta: &CheckpointMeta) -> Result<()> {
    let tensors: Vec<(String, Tensor<f32>)> =
        model.params.iter().map(|(_, name, t)| (name.to_string(), t.clone())).collect();
    let meta = serde_json::to_value(meta).map_err(|e| CliError::format(&path, e.to_string()))?;
    write_container(path, &meta, &tensors)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(MoeModel, CheckpointMeta)> {
    let c = read_container(&path)?;
    let meta: CheckpointMeta =
        serde_json::from_value(c.meta.clone()).map_err(|e| CliError::format(&path, format!("header: {e}")))?;
    if meta.format != CHECKPOINT_FORMAT || meta.version != CHECKPOINT_VERSION {
        return Err(CliError::format(&path, format!("not a version {CHECKPOINT_VERSION} checkpoint")));
    }
    let mut model = MoeModel::new(meta.model, 0).map_err(|e| CliError::Architecture(e.to_string()))?;
    if c.tensors.len() != model.params.len() {
        return Err(CliError::Architecture(format!(
            "checkpoint holds {} tensors, the architecture has {}",
            c.tensors.len(),
            model.params.len()
        )));
    }
    for (name, t) in &c.tensors {
        let id = model
            .params
            .id_of(name)
            .ok_or_else(|| CliError::Architecture(format!("unexpected parameter {name}")))?;
        let slot = model.params.get_mut(id);
        if slot.shape != t.shape {
            return Err(CliError::Architecture(format!("parameter {name} has shape {:?}, expected {:?}", t.shape, slot.shape)));
        }
        slot.data.copy_from_slice(&t.data);
    }
    Ok((model, meta))
}
