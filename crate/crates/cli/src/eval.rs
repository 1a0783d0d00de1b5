//! Hard-gated evaluation of a checkpoint.

use std::fmt::Write as _;
use std::path::Path;

use jamlab::metrics::{EvalReport, Outcome};
use jamlab::moe::{predict_dataset, Dataset, HardOutput, MoeModel, EXPERT_NAMES, N_EXPERTS};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, CheckpointMeta};
use crate::error::{write_file, CliError, Result};
use crate::manifest::{dataset_dir, DatasetManifest};

pub const REPORT_FILE: &str = "report.json";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const USAGE_FILE: &str = "usage.csv";
const SHARD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    HeldOut,
    Train,
    All,
}

impl Split {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "held-out" => Ok(Split::HeldOut),
            "train" => Ok(Split::Train),
            "all" => Ok(Split::All),
            other => Err(CliError::Config(format!("unknown split {other:?}, expected held-out, train or all"))),
        }
    }
}

/// One line of the per-sample predictions file. Classes are 1-based ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionLine {
    pub id: u64,
    pub true_class: usize,
    pub predicted_class: usize,
    pub gate: [f64; N_EXPERTS],
    pub expert: String,
    pub flops: u64,
    pub tier: usize,
}

/// Fails unless the checkpoint was built for the manifest's feature sizes.
pub fn check_compatible(meta: &CheckpointMeta, manifest: &DatasetManifest) -> Result<()> {
    let m = &meta.model;
    if (m.image_h, m.image_w, m.psd_len) != (manifest.image_h, manifest.image_w, manifest.psd_len)
        || m.classes != manifest.class_names.len()
    {
        return Err(CliError::Architecture(format!(
            "checkpoint expects {}x{} images, {}-bin PSD and {} classes; dataset has {}x{}, {} and {}",
            m.image_h,
            m.image_w,
            m.psd_len,
            m.classes,
            manifest.image_h,
            manifest.image_w,
            manifest.psd_len,
            manifest.class_names.len()
        )));
    }
    Ok(())
}

/// Hard-gated predictions computed over shards on `workers` threads.
pub fn predict_sharded(model: &MoeModel, data: &Dataset, workers: usize) -> Result<Vec<HardOutput>> {
    let shards: Vec<Dataset> = data
        .samples
        .chunks(SHARD)
        .map(|c| Dataset { image_h: data.image_h, image_w: data.image_w, psd_len: data.psd_len, samples: c.to_vec() })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
    let parts: Vec<Vec<HardOutput>> =
        pool.install(|| shards.par_iter().map(|s| predict_dataset(model, s, SHARD)).collect::<jamlab::Result<_>>())?;
    Ok(parts.into_iter().flatten().collect())
}

/// Evaluates the checkpoint on one split of the manifest and writes the
/// report, confusion matrix, predictions and usage table to `out_dir`.
pub fn cmd_eval(manifest_path: &Path, checkpoint: &Path, split: Split, out_dir: &Path, workers: usize) -> Result<EvalReport> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let (model, meta) = load_checkpoint(checkpoint)?;
    check_compatible(&meta, &manifest)?;
    let data = manifest.load_dataset(&dataset_dir(manifest_path))?;
    let (train, held_out) = data.split(meta.train_fraction, meta.split_seed)?;
    let data = match split {
        Split::HeldOut => held_out,
        Split::Train => train,
        Split::All => data,
    };
    if data.is_empty() {
        return Err(CliError::Config("the selected split is empty".into()));
    }
    let preds = predict_sharded(&model, &data, workers)?;
    let outcomes: Vec<Outcome> = preds
        .iter()
        .zip(&data.samples)
        .map(|(p, s)| Outcome { truth: s.label, predicted: p.predicted, tier: s.tier, expert: p.expert, flops: p.flops })
        .collect();
    let report = EvalReport::build(&outcomes, manifest.class_names.clone(), N_EXPERTS)?;

    let path = out_dir.join(REPORT_FILE);
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::format(&path, e.to_string()))?;
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    write_file(out_dir.join(CONFUSION_FILE), report.confusion.to_csv(&report.class_names).as_bytes())?;
    write_file(out_dir.join(USAGE_FILE), report.usage.to_csv(&EXPERT_NAMES).as_bytes())?;
    let mut lines = String::new();
    for (p, s) in preds.iter().zip(&data.samples) {
        let line = PredictionLine {
            id: s.id,
            true_class: s.label + 1,
            predicted_class: p.predicted + 1,
            gate: p.gate,
            expert: EXPERT_NAMES[p.expert].to_string(),
            flops: p.flops,
            tier: s.tier,
        };
        let json = serde_json::to_string(&line).map_err(|e| CliError::format(out_dir.join(PREDICTIONS_FILE), e.to_string()))?;
        let _ = writeln!(lines, "{json}");
    }
    write_file(out_dir.join(PREDICTIONS_FILE), lines.as_bytes())?;
    Ok(report)
}
