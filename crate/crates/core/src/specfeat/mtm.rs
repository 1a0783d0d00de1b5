use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::dpss::{dpss_cached, DpssTapers};
use super::stft::bin_frequency;
use crate::error::{bail, Result};
use crate::jamgen::IqSignal;

const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MtmConfig {
    pub nw: f64,
    pub k: usize,
    pub n_fft: usize,
}

impl Default for MtmConfig {
    /// `nw = 3` with the customary `2·nw − 1 = 5` tapers.
    fn default() -> Self {
        Self { nw: 3.0, k: 5, n_fft: 4096 }
    }
}

/// Multitaper power spectral density in natural DFT bin order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub values: Vec<f64>,
    pub log_values: Vec<f64>,
    pub freqs: Vec<f64>,
}

impl PsdEstimate {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn argmax(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// `log_values` reordered so the most negative frequency comes first.
    pub fn shifted_log(&self) -> Vec<f64> {
        let n = self.log_values.len();
        (0..n).map(|i| self.log_values[(i + n / 2) % n]).collect()
    }
}

/// DTFT of `x` sampled at `n_fft` bins: shorter inputs are zero-padded and
/// longer ones are wrapped modulo `n_fft` before the FFT.
fn dtft_bins(x: impl Iterator<Item = Complex64>, n_fft: usize, fft: &dyn rustfft::Fft<f64>) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (n, v) in x.enumerate() {
        buf[n % n_fft] += v;
    }
    fft.process(&mut buf);
    buf
}

pub fn mtm_psd(x: &IqSignal, tapers: &DpssTapers, n_fft: usize) -> Result<PsdEstimate> {
    if tapers.n != x.len() {
        bail!(Size, "taper length {} does not match signal length {}", tapers.n, x.len());
    }
    if n_fft == 0 {
        bail!(Parameter, "n_fft must be positive");
    }
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let mut acc = vec![0.0; n_fft];
    for v in &tapers.tapers {
        let y = dtft_bins(x.samples().iter().zip(v).map(|(s, w)| s * w), n_fft, fft.as_ref());
        acc.iter_mut().zip(&y).for_each(|(a, z)| *a += z.norm_sqr());
    }
    let k = tapers.k() as f64;
    let values: Vec<f64> = acc.into_iter().map(|a| (a / k).max(f64::MIN_POSITIVE)).collect();
    let log_values = values.iter().map(|v| 10.0 * v.max(LOG_FLOOR).log10()).collect();
    let fs = x.config().fs();
    let freqs = (0..n_fft).map(|b| bin_frequency(b, n_fft, fs)).collect();
    Ok(PsdEstimate { values, log_values, freqs })
}

/// [`mtm_psd`] with tapers drawn from the shared cache.
pub fn mtm_psd_with(x: &IqSignal, cfg: &MtmConfig) -> Result<PsdEstimate> {
    let tapers = dpss_cached(x.len(), cfg.nw, cfg.k)?;
    mtm_psd(x, &tapers, cfg.n_fft)
}

/// Center-shifted log PSD, mean-pooled to `n_bins` and standardized.
pub fn psd_feature_vector(psd: &PsdEstimate, n_bins: usize) -> Result<Vec<f64>> {
    let n = psd.len();
    if n_bins == 0 || n_bins > n || n % n_bins != 0 {
        bail!(Parameter, "cannot pool {n} bins into {n_bins}");
    }
    let shifted = psd.shifted_log();
    let group = n / n_bins;
    let pooled: Vec<f64> = shifted.chunks(group).map(|c| c.iter().sum::<f64>() / group as f64).collect();
    Ok(standardize(&pooled))
}

/// Zero mean, unit population variance; near-constant input maps to zeros.
pub fn standardize(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - mean) / std).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jamgen::{synth_pbnj, synth_stj, SignalConfig};
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> IqSignal {
        let mut rng = rng_from_seed(seed);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let data = (0..n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re * s, im * s)
            })
            .collect();
        IqSignal::new(data, SignalConfig::with_samples(20e6, n).unwrap()).unwrap()
    }

    fn kurtosis(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
        m4 / (m2 * m2)
    }

    #[test]
    fn white_noise_is_flat_at_unit_level() {
        let tapers = dpss_tapers_4096();
        for seed in 0..100 {
            let psd = mtm_psd(&noise(4096, seed), &tapers, 4096).unwrap();
            let mean = psd.values.iter().sum::<f64>() / psd.len() as f64;
            let db = 10.0 * mean.log10();
            assert!(db.abs() < 0.5, "seed {seed}: {db} dB");
        }
    }

    fn dpss_tapers_4096() -> std::sync::Arc<DpssTapers> {
        dpss_cached(4096, 3.0, 5).unwrap()
    }

    #[test]
    fn tone_peaks_at_its_bin() {
        let cfg = SignalConfig::with_samples(20e6, 4096).unwrap();
        let x = synth_stj(5e6, 0.3, &cfg).unwrap();
        let psd = mtm_psd(&x, &dpss_tapers_4096(), 4096).unwrap();
        let peak = psd.argmax() as i64;
        assert!((peak - 1024).abs() <= 1, "{peak}");
        assert!((psd.freqs[psd.argmax()] - 5e6).abs() <= 20e6 / 4096.0);
    }

    #[test]
    fn tone_peaks_with_folded_record() {
        let cfg = SignalConfig::paper_default();
        let x = synth_stj(-2.5e6, 1.0, &cfg).unwrap();
        let psd = mtm_psd_with(&x, &MtmConfig::default()).unwrap();
        let peak = psd.argmax() as i64;
        assert!((peak - 3584).abs() <= 1, "{peak}");
    }

    #[test]
    fn single_taper_is_a_periodogram() {
        let x = noise(256, 3);
        let t = dpss_cached(256, 2.0, 1).unwrap();
        let psd = mtm_psd(&x, &t, 512).unwrap();
        for (k, v) in psd.values.iter().enumerate() {
            let y: Complex64 = x
                .samples()
                .iter()
                .zip(&t.tapers[0])
                .enumerate()
                .map(|(n, (s, w))| s * w * Complex64::from_polar(1.0, -std::f64::consts::TAU * (k * n) as f64 / 512.0))
                .sum();
            assert!((y.norm_sqr() - v).abs() <= 1e-9 * v.max(1e-12), "bin {k}");
        }
    }

    #[test]
    fn homogeneous_in_amplitude() {
        let x = noise(512, 9);
        let t = dpss_cached(512, 3.0, 5).unwrap();
        let a = mtm_psd(&x, &t, 512).unwrap();
        let b = mtm_psd(&x.scaled(3.0), &t, 512).unwrap();
        for (p, q) in a.values.iter().zip(&b.values) {
            assert!((q - 9.0 * p).abs() <= 1e-10 * q);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let t = dpss_cached(128, 2.0, 3).unwrap();
        assert!(mtm_psd(&noise(129, 0), &t, 128).is_err());
    }

    #[test]
    fn constant_psd_gives_zeros() {
        let psd = PsdEstimate { values: vec![2.0; 64], log_values: vec![3.0; 64], freqs: vec![0.0; 64] };
        assert_eq!(psd_feature_vector(&psd, 16).unwrap(), vec![0.0; 16]);
    }

    #[test]
    fn full_resolution_pooling_is_identity() {
        let log_values: Vec<f64> = (0..8).map(|i| (i * i) as f64).collect();
        let psd = PsdEstimate { values: vec![1.0; 8], log_values: log_values.clone(), freqs: vec![0.0; 8] };
        let v = psd_feature_vector(&psd, 8).unwrap();
        let shifted: Vec<f64> = (0..8).map(|i| log_values[(i + 4) % 8]).collect();
        assert_eq!(v, standardize(&shifted));
        let mean = v.iter().sum::<f64>() / 8.0;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 8.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tone_vector_is_more_peaked_than_barrage() {
        let cfg = SignalConfig::with_samples(20e6, 4096).unwrap();
        let mtm = MtmConfig::default();
        for seed in 0..100u64 {
            let mut rng = rng_from_seed(seed);
            let n = noise(4096, seed + 1000);
            // 10 dB JNR over unit-variance noise
            let amp = 10f64.sqrt();
            let f = (seed as f64 / 100.0 - 0.5) * 16e6;
            let stj = synth_stj(f, 0.0, &cfg).unwrap().scaled(amp);
            let pb = synth_pbnj(f * 0.5, 4e6, &cfg, &mut rng).unwrap();
            let pb = pb.scaled(amp / pb.mean_power().sqrt());
            let add = |a: &IqSignal| {
                let d = a.samples().iter().zip(n.samples()).map(|(x, y)| x + y).collect();
                IqSignal::new(d, cfg).unwrap()
            };
            let vs = psd_feature_vector(&mtm_psd_with(&add(&stj), &mtm).unwrap(), 128).unwrap();
            let vp = psd_feature_vector(&mtm_psd_with(&add(&pb), &mtm).unwrap(), 128).unwrap();
            assert!(kurtosis(&vs) > kurtosis(&vp), "seed {seed}");
        }
    }

    #[test]
    fn barrage_power_stays_in_band() {
        let cfg = SignalConfig::with_samples(20e6, 4096).unwrap();
        let mut rng = rng_from_seed(5);
        let (f_c, b) = (2e6, 3e6);
        let x = synth_pbnj(f_c, b, &cfg, &mut rng).unwrap();
        let psd = mtm_psd_with(&x, &MtmConfig::default()).unwrap();
        let total: f64 = psd.values.iter().sum();
        let inside: f64 = psd
            .values
            .iter()
            .zip(&psd.freqs)
            .filter(|(_, f)| (**f - f_c).abs() <= 0.6 * b)
            .map(|(v, _)| v)
            .sum();
        assert!(inside / total >= 0.97, "{}", inside / total);
    }

    #[test]
    fn full_band_barrage_is_flat() {
        let cfg = SignalConfig::paper_default();
        let mut rng = rng_from_seed(6);
        let x = synth_pbnj(0.0, 20e6, &cfg, &mut rng).unwrap();
        let psd = mtm_psd_with(&x, &MtmConfig::default()).unwrap();
        let bands: Vec<f64> = psd.values.chunks(256).map(|c| c.iter().sum::<f64>() / 256.0).collect();
        let mean = bands.iter().sum::<f64>() / bands.len() as f64;
        for v in &bands {
            assert!((10.0 * (v / mean).log10()).abs() < 1.0, "{bands:?}");
        }
    }
}
