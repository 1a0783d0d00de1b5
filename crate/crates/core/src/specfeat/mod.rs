//! Time-frequency and spectral features of IQ records.
//!
//! Two views are produced for every record: a gamma-compressed
//! log-magnitude STFT image and a multitaper power spectral density.

mod dpss;
mod image;
mod mtm;
mod render;
mod stft;
mod window;

pub use dpss::{concentration, dpss_cached, dpss_tapers, DpssTapers, Tridiagonal};
pub use image::{log_magnitude_from_magnitudes, log_magnitude_image, resize_bilinear, Grid, Spectrogram};
pub use mtm::{mtm_psd, mtm_psd_with, psd_feature_vector, standardize, MtmConfig, PsdEstimate};
pub use render::{render_curve, render_grid, render_image, Colormap, Raster, RenderSource};
pub use stft::{bin_frequency, stft, stft_magnitude, StftConfig, StftMatrix};
pub use window::{hann_window, HannKind};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::jamgen::IqSignal;

/// Feature extraction settings for both views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureProfile {
    pub stft: StftConfig,
    pub mtm: MtmConfig,
    /// Length of the standardized PSD vector.
    pub psd_bins: usize,
}

impl FeatureProfile {
    /// 64×64 image and 128-bin PSD vector.
    pub fn desk() -> Self {
        Self { stft: StftConfig::desk(), mtm: MtmConfig::default(), psd_bins: 128 }
    }

    /// 224×224 image and full-resolution 4096-bin PSD vector.
    pub fn full() -> Self {
        Self { stft: StftConfig::full(), mtm: MtmConfig::default(), psd_bins: 4096 }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "full" => Some(Self::full()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if self.psd_bins == 0 || self.psd_bins > self.mtm.n_fft || self.mtm.n_fft % self.psd_bins != 0 {
            crate::error::bail!(
                Parameter,
                "psd_bins {} must divide n_fft {}",
                self.psd_bins,
                self.mtm.n_fft
            );
        }
        Ok(())
    }
}

/// Both views of one record.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub spectrogram: Spectrogram,
    pub psd: PsdEstimate,
    pub psd_vector: Vec<f64>,
}

pub fn extract_features(x: &IqSignal, profile: &FeatureProfile) -> Result<Features> {
    profile.validate()?;
    let (frames, mags) = stft_magnitude(x, &profile.stft)?;
    let spectrogram = log_magnitude_from_magnitudes(frames, &mags, &profile.stft, x.config().fs())?;
    let psd = mtm_psd_with(x, &profile.mtm)?;
    let psd_vector = psd_feature_vector(&psd, profile.psd_bins)?;
    Ok(Features { spectrogram, psd, psd_vector })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jamgen::{synth_stj, SignalConfig};

    #[test]
    fn desk_features_have_expected_shapes() {
        let x = synth_stj(3e6, 0.0, &SignalConfig::paper_default()).unwrap();
        let f = extract_features(&x, &FeatureProfile::desk()).unwrap();
        assert_eq!((f.spectrogram.image.height, f.spectrogram.image.width), (64, 64));
        assert_eq!(f.psd_vector.len(), 128);
        assert!(f.spectrogram.max_db() <= 0.0);
        assert!(f.spectrogram.image.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn full_profile_image_is_224() {
        let x = synth_stj(3e6, 0.0, &SignalConfig::with_samples(20e6, 2000).unwrap()).unwrap();
        let f = extract_features(&x, &FeatureProfile::full()).unwrap();
        assert_eq!((f.spectrogram.image.height, f.spectrogram.image.width), (224, 224));
        assert_eq!(f.psd_vector.len(), 4096);
    }
}
