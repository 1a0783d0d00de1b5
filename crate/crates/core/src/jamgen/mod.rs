//! Jamming waveform synthesis.
//!
//! Five primitives (single tone, multi tone, linear chirp, gated pulse and
//! partial-band noise) are synthesized as unit-power complex baseband
//! sequences, superposed into the 21-class compound taxonomy, calibrated to a
//! target jamming-to-noise ratio and passed through an AWGN channel.

mod classes;
mod compound;
mod filter;
mod primitives;
mod sampling;

pub use classes::{JammingClass, Tier, CLASSES, NUM_CLASSES};
pub use compound::{add_awgn, apply_jnr, compose_compound, measured_jnr_db};
pub use filter::{convolve_same, lowpass_fir, PBNJ_FIR_ORDER};
pub use primitives::{
    pulse_lengths, synth_lfm, synth_mtj, synth_pbnj, synth_primitive, synth_pulse, synth_stj,
    PrimitiveKind,
    PrimitiveParams, Tone,
};
pub use sampling::{realize, sample_spec, synthesize_jamming, JammingSpec, TableOne};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// Sampling grid shared by every signal in a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    fs: f64,
    duration: f64,
    n_samples: usize,
}

impl SignalConfig {
    /// `n_samples = floor(fs * duration)`.
    pub fn new(fs: f64, duration: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            bail!(Parameter, "sample rate must be positive, got {fs}");
        }
        if !(duration.is_finite() && duration > 0.0) {
            bail!(Parameter, "duration must be positive, got {duration}");
        }
        // guard against fs*duration landing a hair under an integer
        let n = (fs * duration * (1.0 + 1e-12)).floor();
        if n < 2.0 {
            bail!(Parameter, "signal must hold at least 2 samples, got {n}");
        }
        Ok(Self { fs, duration, n_samples: n as usize })
    }

    /// Grid with an explicit sample count; duration becomes `n / fs`.
    pub fn with_samples(fs: f64, n_samples: usize) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            bail!(Parameter, "sample rate must be positive, got {fs}");
        }
        if n_samples < 2 {
            bail!(Parameter, "signal must hold at least 2 samples, got {n_samples}");
        }
        Ok(Self { fs, duration: n_samples as f64 / fs, n_samples })
    }

    /// 20 MHz for 1 ms, i.e. 20 000 samples.
    pub fn paper_default() -> Self {
        Self::new(TableOne::FS, TableOne::DURATION).expect("valid constants")
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Time of sample `n` in seconds.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 / self.fs
    }

    pub fn nyquist(&self) -> f64 {
        self.fs / 2.0
    }
}

/// Complex baseband sequence on a [`SignalConfig`] grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IqSignal {
    data: Vec<Complex64>,
    config: SignalConfig,
}

impl IqSignal {
    pub fn new(data: Vec<Complex64>, config: SignalConfig) -> Result<Self> {
        if data.len() != config.n_samples() {
            bail!(Size, "expected {} samples, got {}", config.n_samples(), data.len());
        }
        if let Some(i) = data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            bail!(Numeric, "sample {i} is not finite");
        }
        Ok(Self { data, config })
    }

    pub fn zeros(config: SignalConfig) -> Self {
        Self { data: vec![Complex64::new(0.0, 0.0); config.n_samples()], config }
    }

    pub(crate) fn from_parts_unchecked(data: Vec<Complex64>, config: SignalConfig) -> Self {
        debug_assert_eq!(data.len(), config.n_samples());
        Self { data, config }
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.data
    }

    pub fn config(&self) -> &SignalConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Sample-average power `(1/N) Σ|x[n]|²`.
    pub fn mean_power(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.data.len() as f64
    }

    pub fn scaled(&self, factor: f64) -> IqSignal {
        Self {
            data: self.data.iter().map(|z| z * factor).collect(),
            config: self.config,
        }
    }
}

/// Additive white Gaussian noise channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub noise_variance: f64,
    pub seed: u64,
}

impl ChannelConfig {
    /// Unit noise variance; every JNR in the crate is relative to it.
    pub fn unit(seed: u64) -> Self {
        Self { noise_variance: 1.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_variance.is_finite() && self.noise_variance > 0.0) {
            bail!(Parameter, "noise variance must be positive, got {}", self.noise_variance);
        }
        Ok(())
    }

    pub fn rng(&self) -> crate::rng::SampleRng {
        crate::rng::rng_from_seed(self.seed)
    }
}
