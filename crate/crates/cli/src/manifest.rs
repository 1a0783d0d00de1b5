//! Dataset manifest: what was generated, where it lives and its checksums.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use jamlab::jamgen::{JammingClass, CLASSES};
use jamlab::moe::{Dataset, Sample};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{GenConfig, Profile};
use crate::container::{decode, header_len, Container};
use crate::error::{read_file, write_file, CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SPECTROGRAM_TENSOR: &str = "spectrogram";
pub const PSD_TENSOR: &str = "psd";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: u64,
    pub class_id: u8,
    /// Number of superposed primitives.
    pub tier: u8,
    pub jnr_db: f64,
    pub seed: u64,
    pub file: String,
    pub row: usize,
    /// Byte offsets of this sample's rows inside `file`.
    pub spectrogram_offset: u64,
    pub psd_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub root_seed: u64,
    pub profile: Profile,
    /// Names of all 21 classes; label `k` is `class_names[k]`.
    pub class_names: Vec<String>,
    pub config: GenConfig,
    pub jnr_grid: Vec<f64>,
    /// `samples_per_point[c][j]` for `config.classes[c]` at `jnr_grid[j]`.
    pub samples_per_point: Vec<Vec<usize>>,
    pub image_h: usize,
    pub image_w: usize,
    pub psd_len: usize,
    pub files: Vec<FileEntry>,
    pub records: Vec<SampleRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn class_names() -> Vec<String> {
    CLASSES.iter().map(JammingClass::name).collect()
}

/// Directory holding the manifest's files.
pub fn dataset_dir(manifest_path: &Path) -> PathBuf {
    manifest_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

impl DatasetManifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::format(&path, e.to_string()))?;
        text.push('\n');
        write_file(path, text.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = read_file(&path)?;
        let m: Self = serde_json::from_slice(&bytes).map_err(|e| CliError::format(&path, e.to_string()))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(CliError::format(&path, format!("schema version {} unsupported", m.schema_version)));
        }
        Ok(m)
    }

    pub fn record(&self, id: u64) -> Result<&SampleRecord> {
        self.records.iter().find(|r| r.id == id).ok_or_else(|| CliError::MissingSample(format!("no sample with id {id}")))
    }

    /// Checks id uniqueness, file presence, checksums and record offsets.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        self.verified_containers(dir).map(|_| ())
    }

    fn verified_containers(&self, dir: &Path) -> Result<Vec<(String, Container)>> {
        let mut ids = HashSet::new();
        for r in &self.records {
            if !ids.insert(r.id) {
                return Err(CliError::Integrity(format!("duplicate sample id {}", r.id)));
            }
        }
        let mut files = Vec::with_capacity(self.files.len());
        for f in &self.files {
            let path = dir.join(&f.name);
            if !path.is_file() {
                return Err(CliError::Integrity(format!("missing file {}", path.display())));
            }
            let bytes = read_file(&path)?;
            if bytes.len() as u64 != f.bytes || sha256_hex(&bytes) != f.sha256 {
                return Err(CliError::Integrity(format!("checksum mismatch for {}", path.display())));
            }
            let c = decode(&bytes).map_err(|e| CliError::format(&path, e))?;
            files.push((f.name.clone(), c));
        }
        let spec_row = (self.image_h * self.image_w * 4) as u64;
        let psd_row = (self.psd_len * 4) as u64;
        for r in &self.records {
            let (_, c) = files
                .iter()
                .find(|(n, _)| *n == r.file)
                .ok_or_else(|| CliError::Integrity(format!("sample {} refers to unlisted file {}", r.id, r.file)))?;
            let loc = |name: &str, row_bytes: u64| {
                c.index.iter().find(|e| e.name == name).map(|e| e.offset + header_len(e.dims.len()) + r.row as u64 * row_bytes)
            };
            if loc(SPECTROGRAM_TENSOR, spec_row) != Some(r.spectrogram_offset) || loc(PSD_TENSOR, psd_row) != Some(r.psd_offset) {
                return Err(CliError::Integrity(format!("sample {} offsets do not match {}", r.id, r.file)));
            }
        }
        Ok(files)
    }

    /// Verifies the files and loads every record as a labelled sample.
    pub fn load_dataset(&self, dir: &Path) -> Result<Dataset> {
        let decoded = self.verified_containers(dir)?;
        let (hw, l) = (self.image_h * self.image_w, self.psd_len);
        let mut samples = Vec::with_capacity(self.records.len());
        for r in &self.records {
            let (_, c) = decoded.iter().find(|(n, _)| *n == r.file).expect("verified file");
            let spec = c.get(SPECTROGRAM_TENSOR).ok_or_else(|| CliError::Integrity("no spectrogram tensor".into()))?;
            let psd = c.get(PSD_TENSOR).ok_or_else(|| CliError::Integrity("no psd tensor".into()))?;
            let (a, b) = (r.row * hw, r.row * l);
            if spec.data.len() < a + hw || psd.data.len() < b + l {
                return Err(CliError::Integrity(format!("sample {} row out of range", r.id)));
            }
            samples.push(Sample {
                id: r.id,
                image: spec.data[a..a + hw].to_vec(),
                psd: psd.data[b..b + l].to_vec(),
                label: r.class_id as usize - 1,
                tier: r.tier as usize,
            });
        }
        Ok(Dataset::new(self.image_h, self.image_w, self.psd_len, samples)?)
    }
}
