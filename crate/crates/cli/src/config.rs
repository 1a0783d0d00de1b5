//! JSON configuration files. Unknown keys are rejected.

use std::path::Path;

use jamlab::jamgen::{JammingClass, SignalConfig, TableOne, NUM_CLASSES};
use jamlab::moe::{GateMode, N_EXPERTS};
use jamlab::nn::TrainConfig;
use jamlab::specfeat::FeatureProfile;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{read_file, CliError, Result};

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let bytes = read_file(&path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.as_ref().display())))
}

/// Evenly spaced JNR values `start, start + step, …, stop` in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JnrGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl JnrGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.start.is_finite() && self.stop.is_finite() && self.step > 0.0 && self.stop >= self.start) {
            return Err(CliError::Config(format!("invalid JNR grid {self:?}")));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        if n > 10_000 {
            return Err(CliError::Config(format!("JNR grid has {n} points")));
        }
        // rounded to the nanodecibel so grids written as decimals compare exactly
        Ok((0..n).map(|k| ((self.start + k as f64 * self.step) * 1e9).round() / 1e9).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Full,
}

impl Profile {
    pub fn features(self) -> FeatureProfile {
        match self {
            Profile::Desk => FeatureProfile::desk(),
            Profile::Full => FeatureProfile::full(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(CliError::Config(format!("unknown profile {other:?}, expected desk or full"))),
        }
    }
}

/// Dataset generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    /// Class ids in `1..=21`.
    pub classes: Vec<u8>,
    pub jnr_db: JnrGrid,
    /// Samples per class, spread over the JNR grid in turn.
    pub per_class: usize,
    pub seed: u64,
    pub profile: Profile,
    /// Complex samples per record; defaults to 1 ms at 20 MHz.
    #[serde(default)]
    pub n_samples: Option<usize>,
}

impl GenConfig {
    /// The five single-primitive classes at JNR 0..10 dB, 200 per class.
    pub fn desk() -> Self {
        Self {
            classes: vec![1, 2, 3, 4, 5],
            jnr_db: JnrGrid { start: 0.0, stop: 10.0, step: 1.0 },
            per_class: 200,
            seed: 2024,
            profile: Profile::Desk,
            n_samples: None,
        }
    }

    /// All 21 classes over the −25..15 dB sweep.
    pub fn full(per_point: usize) -> Self {
        let (lo, hi) = TableOne::JNR_DB;
        Self {
            classes: (1..=NUM_CLASSES as u8).collect(),
            jnr_db: JnrGrid { start: lo, stop: hi, step: 1.0 },
            per_class: per_point * 41,
            seed: 2024,
            profile: Profile::Full,
            n_samples: None,
        }
    }

    pub fn signal(&self) -> Result<SignalConfig> {
        let cfg = match self.n_samples {
            None => SignalConfig::paper_default(),
            Some(n) => SignalConfig::with_samples(TableOne::FS, n)?,
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(CliError::Config("no classes selected".into()));
        }
        for (i, &c) in self.classes.iter().enumerate() {
            JammingClass::from_id(c).map_err(|e| CliError::Config(e.to_string()))?;
            if self.classes[..i].contains(&c) {
                return Err(CliError::Config(format!("class {c} listed twice")));
            }
        }
        if self.per_class == 0 {
            return Err(CliError::Config("per_class must be positive".into()));
        }
        self.jnr_db.values()?;
        self.signal().map_err(|e| CliError::Config(e.to_string()))?;
        self.profile.features().validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Gate used while training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum GateChoice {
    Learned,
    Forced(usize),
}

/// Training settings; omitted fields take the profile defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub warmup_epochs: Option<usize>,
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
    pub aux_weight: Option<f64>,
    pub train_fraction: Option<f64>,
    pub split_seed: Option<u64>,
    pub gate: Option<GateChoice>,
    /// Final channel widths of the heavy, mid and light experts.
    pub widths: Option<[usize; N_EXPERTS]>,
}

/// Fully resolved training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub optim: TrainConfig,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub gate: GateChoice,
    pub widths: Option<[usize; N_EXPERTS]>,
}

impl TrainSettings {
    pub fn gate_mode(&self) -> GateMode {
        match self.gate {
            GateChoice::Learned => GateMode::Learned,
            GateChoice::Forced(e) => GateMode::Forced(e),
        }
    }
}

/// Defaults of the desk profile.
pub fn desk_train_defaults() -> TrainConfig {
    TrainConfig {
        lr: 3e-3,
        weight_decay: 0.05,
        warmup_epochs: 2,
        max_epochs: 30,
        batch_size: 16,
        patience: 10,
        seed: 0,
        aux_weight: 0.01,
    }
}

impl TrainFile {
    pub fn resolve(&self, profile: Profile) -> Result<TrainSettings> {
        let base = match profile {
            Profile::Desk => desk_train_defaults(),
            Profile::Full => TrainConfig::paper(),
        };
        let optim = TrainConfig {
            lr: self.lr.unwrap_or(base.lr),
            weight_decay: self.weight_decay.unwrap_or(base.weight_decay),
            warmup_epochs: self.warmup_epochs.unwrap_or(base.warmup_epochs),
            max_epochs: self.max_epochs.unwrap_or(base.max_epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            patience: self.patience.unwrap_or(base.patience),
            seed: self.seed.unwrap_or(base.seed),
            aux_weight: self.aux_weight.unwrap_or(base.aux_weight),
        };
        optim.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let train_fraction = self.train_fraction.unwrap_or(0.8);
        if !(train_fraction > 0.0 && train_fraction <= 1.0) {
            return Err(CliError::Config(format!("train_fraction {train_fraction} outside (0, 1]")));
        }
        let gate = self.gate.unwrap_or(GateChoice::Learned);
        if let GateChoice::Forced(e) = gate {
            if e >= N_EXPERTS {
                return Err(CliError::Config(format!("no expert {e}")));
            }
        }
        let split_seed = self.split_seed.unwrap_or(optim.seed);
        Ok(TrainSettings { optim, train_fraction, split_seed, gate, widths: self.widths })
    }
}
