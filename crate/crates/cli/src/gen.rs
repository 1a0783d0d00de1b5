//! Dataset synthesis and feature extraction.

use std::path::Path;

use jamlab::jamgen::{realize, sample_spec, ChannelConfig, JammingClass, SignalConfig};
use jamlab::nn::Tensor;
use jamlab::rng::{derive_seed, rng_from_seed, sample_seed};
use jamlab::specfeat::{extract_features, FeatureProfile, Features};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::GenConfig;
use crate::container::{encode, header_len};
use crate::error::{write_file, CliError, Result};
use crate::manifest::{
    class_names, sha256_hex, DatasetManifest, FileEntry, SampleRecord, MANIFEST_FILE, PSD_TENSOR, SCHEMA_VERSION,
    SPECTROGRAM_TENSOR,
};

pub const FEATURES_FILE: &str = "features.jlt";
pub const THREADS_ENV: &str = "JAMLAB_THREADS";

/// One sample to synthesize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedSample {
    pub id: u64,
    pub class_id: u8,
    pub jnr_db: f64,
    pub seed: u64,
}

/// Every sample of `cfg` in id order: each class cycles through the JNR grid.
pub fn plan(cfg: &GenConfig) -> Result<Vec<PlannedSample>> {
    cfg.validate()?;
    let grid = cfg.jnr_db.values()?;
    let mut out = Vec::with_capacity(cfg.classes.len() * cfg.per_class);
    for &class_id in &cfg.classes {
        for k in 0..cfg.per_class {
            let jnr_db = grid[k % grid.len()];
            let index = (k / grid.len()) as u64;
            out.push(PlannedSample {
                id: out.len() as u64,
                class_id,
                jnr_db,
                seed: sample_seed(cfg.seed, class_id, jnr_db, index),
            });
        }
    }
    Ok(out)
}

/// Both feature views of one planned sample.
pub fn features_of(s: &PlannedSample, signal: &SignalConfig, profile: &FeatureProfile) -> Result<Features> {
    let mut rng = rng_from_seed(s.seed);
    let spec = sample_spec(s.class_id, s.jnr_db, &mut rng)?;
    let channel = ChannelConfig::unit(derive_seed(s.seed, &[1]));
    let (_, x) = realize(&spec, signal, &channel, &mut rng)?;
    Ok(extract_features(&x, profile)?)
}

/// Spectrogram and standardized PSD vector of one planned sample.
pub fn synthesize(s: &PlannedSample, signal: &SignalConfig, profile: &FeatureProfile) -> Result<(Vec<f32>, Vec<f32>)> {
    let f = features_of(s, signal, profile)?;
    let image = f.spectrogram.image.data.iter().map(|&v| v as f32).collect();
    let psd = f.psd_vector.iter().map(|&v| v as f32).collect();
    Ok((image, psd))
}

/// Worker count from `JAMLAB_THREADS`, defaulting to the available cores.
pub fn worker_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// Synthesizes the dataset described by `cfg` into `out_dir`.
pub fn cmd_gen(cfg: &GenConfig, out_dir: &Path, workers: usize) -> Result<DatasetManifest> {
    let planned = plan(cfg)?;
    let signal = cfg.signal()?;
    let profile = cfg.profile.features();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
    let features: Vec<(Vec<f32>, Vec<f32>)> =
        pool.install(|| planned.par_iter().map(|s| synthesize(s, &signal, &profile)).collect::<Result<_>>())?;

    let (h, w) = (profile.stft.out_h, profile.stft.out_w);
    let l = profile.psd_bins;
    let n = planned.len();
    let mut images = Vec::with_capacity(n * h * w);
    let mut psds = Vec::with_capacity(n * l);
    for (img, psd) in features {
        images.extend(img);
        psds.extend(psd);
    }
    let tensors = vec![
        (SPECTROGRAM_TENSOR.to_string(), Tensor::new(vec![n, h, w], images)?),
        (PSD_TENSOR.to_string(), Tensor::new(vec![n, l], psds)?),
    ];
    let meta = serde_json::json!({ "kind": "jamlab-features", "profile": cfg.profile.name() });
    let bytes = encode(&meta, &tensors).map_err(|r| CliError::format(out_dir.join(FEATURES_FILE), r))?;
    write_file(out_dir.join(FEATURES_FILE), &bytes)?;

    let spec_base = header_len(3);
    let psd_base = spec_base + (n * h * w * 4) as u64 + header_len(2);
    let records = planned
        .iter()
        .enumerate()
        .map(|(row, s)| {
            let tier = JammingClass::from_id(s.class_id).map(|c| c.tier().components() as u8)?;
            Ok(SampleRecord {
                id: s.id,
                class_id: s.class_id,
                tier,
                jnr_db: s.jnr_db,
                seed: s.seed,
                file: FEATURES_FILE.to_string(),
                row,
                spectrogram_offset: spec_base + (row * h * w * 4) as u64,
                psd_offset: psd_base + (row * l * 4) as u64,
            })
        })
        .collect::<jamlab::Result<Vec<_>>>()?;
    let grid = cfg.jnr_db.values()?;
    let samples_per_point = cfg
        .classes
        .iter()
        .map(|&c| grid.iter().map(|&j| planned.iter().filter(|s| s.class_id == c && s.jnr_db == j).count()).collect())
        .collect();
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        root_seed: cfg.seed,
        profile: cfg.profile,
        class_names: class_names(),
        config: cfg.clone(),
        jnr_grid: grid,
        samples_per_point,
        image_h: h,
        image_w: w,
        psd_len: l,
        files: vec![FileEntry { name: FEATURES_FILE.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) }],
        records,
    };
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
