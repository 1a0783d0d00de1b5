//! Training from a generated dataset.

use std::path::Path;

use jamlab::moe::{fit, EpochRecord, FitOptions, ModelSpec, MoeModel};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{save_checkpoint, CheckpointMeta, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
use crate::config::TrainSettings;
use crate::error::{write_file, CliError, Result};
use crate::manifest::{dataset_dir, DatasetManifest};

pub const CHECKPOINT_FILE: &str = "checkpoint.jlt";
pub const HISTORY_FILE: &str = "history.json";

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct History {
    pub settings: TrainSettings,
    pub model: ModelSpec,
    pub train_samples: usize,
    pub held_out_samples: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Architecture matching a manifest's feature dimensions.
pub fn model_spec(manifest: &DatasetManifest, settings: &TrainSettings) -> Result<ModelSpec> {
    let mut spec = ModelSpec::desk();
    spec.classes = manifest.class_names.len();
    spec.image_h = manifest.image_h;
    spec.image_w = manifest.image_w;
    spec.psd_len = manifest.psd_len;
    if let Some(w) = settings.widths {
        spec.widths = w;
    }
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(spec)
}

/// Trains on the manifest's training split and writes the best checkpoint
/// and the history to `out_dir`.
pub fn cmd_train(manifest_path: &Path, settings: &TrainSettings, out_dir: &Path) -> Result<History> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let data = manifest.load_dataset(&dataset_dir(manifest_path))?;
    let (train, held_out) = data.split(settings.train_fraction, settings.split_seed)?;
    let spec = model_spec(&manifest, settings)?;
    let model = MoeModel::new(spec, settings.optim.seed)?;
    let opts = FitOptions { gate: settings.gate_mode(), ..FitOptions::default() };
    let result = fit(model, &train, &held_out, &settings.optim, &opts)?;

    let meta = CheckpointMeta {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        model: spec,
        profile: manifest.profile,
        train_fraction: settings.train_fraction,
        split_seed: settings.split_seed,
        best_epoch: result.best_epoch,
    };
    save_checkpoint(out_dir.join(CHECKPOINT_FILE), &result.model, &meta)?;
    let history = History {
        settings: settings.clone(),
        model: spec,
        train_samples: train.len(),
        held_out_samples: held_out.len(),
        epochs: result.history,
        best_epoch: result.best_epoch,
        stopped_early: result.stopped_early,
    };
    let path = out_dir.join(HISTORY_FILE);
    let mut text = serde_json::to_string_pretty(&history).map_err(|e| CliError::format(&path, e.to_string()))?;
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    Ok(history)
}
