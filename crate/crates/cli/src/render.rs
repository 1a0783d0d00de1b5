//! Spectrogram and PSD images of single records.

use std::path::{Path, PathBuf};

use jamlab::specfeat::{render_image, Colormap, RenderSource};
use serde::{Deserialize, Serialize};

use crate::config::{GenConfig, JnrGrid, Profile};
use crate::error::{CliError, Result};
use crate::gen::{features_of, PlannedSample};
use crate::manifest::DatasetManifest;

pub const CURVE_WIDTH: usize = 512;
pub const CURVE_HEIGHT: usize = 256;

/// A single record described directly rather than through a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub class_id: u8,
    pub jnr_db: f64,
    pub seed: u64,
    pub profile: Profile,
    #[serde(default)]
    pub n_samples: Option<usize>,
}

/// Paths of the two images written for one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub spectrogram: PathBuf,
    pub psd: PathBuf,
}

fn render(planned: &PlannedSample, cfg: &GenConfig, stem: &str, out_dir: &Path) -> Result<Rendered> {
    cfg.validate()?;
    let f = features_of(planned, &cfg.signal()?, &cfg.profile.features())?;
    let out = Rendered {
        spectrogram: out_dir.join(format!("{stem}_spectrogram.png")),
        psd: out_dir.join(format!("{stem}_psd.png")),
    };
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    render_image(RenderSource::Grid(&f.spectrogram.image), Colormap::Viridis, &out.spectrogram)?;
    let curve = f.psd.shifted_log();
    render_image(
        RenderSource::Curve { values: &curve, width: CURVE_WIDTH, height: CURVE_HEIGHT },
        Colormap::Grayscale,
        &out.psd,
    )?;
    Ok(out)
}

/// Re-synthesizes manifest record `id` and renders both views.
pub fn render_sample(manifest_path: &Path, id: u64, out_dir: &Path) -> Result<Rendered> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let r = manifest.record(id)?;
    let planned = PlannedSample { id: r.id, class_id: r.class_id, jnr_db: r.jnr_db, seed: r.seed };
    render(&planned, &manifest.config, &format!("sample_{id}"), out_dir)
}

/// Synthesizes and renders the record described by `spec`.
pub fn render_spec(spec: &SignalSpec, out_dir: &Path) -> Result<Rendered> {
    let cfg = GenConfig {
        classes: vec![spec.class_id],
        jnr_db: JnrGrid { start: spec.jnr_db, stop: spec.jnr_db, step: 1.0 },
        per_class: 1,
        seed: spec.seed,
        profile: spec.profile,
        n_samples: spec.n_samples,
    };
    let planned = PlannedSample { id: 0, class_id: spec.class_id, jnr_db: spec.jnr_db, seed: spec.seed };
    render(&planned, &cfg, &format!("class{}_jnr{}_seed{}", spec.class_id, spec.jnr_db, spec.seed), out_dir)
}
