use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::window::{hann_window, HannKind};
use crate::error::{bail, Result};
use crate::jamgen::IqSignal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub n_win: usize,
    pub n_fft: usize,
    pub hop: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub out_h: usize,
    pub out_w: usize,
    #[serde(default)]
    pub window: HannKind,
    /// Decibel values are clamped from below at this level.
    pub floor_db: f64,
}

impl StftConfig {
    /// 128-point periodic Hann, hop 11 (≈91.4% overlap), 4096-point FFT,
    /// γ = 0.9, 224×224 output.
    pub fn full() -> Self {
        Self {
            n_win: 128,
            n_fft: 4096,
            hop: 11,
            gamma: 0.9,
            epsilon: 1e-12,
            out_h: 224,
            out_w: 224,
            window: HannKind::Periodic,
            floor_db: -120.0,
        }
    }

    /// Same analysis window and hop as [`StftConfig::full`] with an un-padded
    /// transform and a 64×64 image.
    pub fn desk() -> Self {
        Self { n_fft: 128, out_h: 64, out_w: 64, ..Self::full() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.hop && self.hop <= self.n_win && self.n_win <= self.n_fft) {
            bail!(
                Parameter,
                "need 1 <= hop <= n_win <= n_fft, got hop={} n_win={} n_fft={}",
                self.hop,
                self.n_win,
                self.n_fft
            );
        }
        if !(self.gamma > 0.0 && self.epsilon > 0.0) {
            bail!(Parameter, "gamma and epsilon must be positive");
        }
        if self.out_h == 0 || self.out_w == 0 {
            bail!(Parameter, "output image must be non-empty");
        }
        if !self.floor_db.is_finite() {
            bail!(Parameter, "floor must be finite");
        }
        Ok(())
    }

    pub fn frame_count(&self, n: usize) -> Result<usize> {
        if n < self.n_win {
            bail!(Size, "signal of {n} samples is shorter than one {}-point window", self.n_win);
        }
        Ok((n - self.n_win) / self.hop + 1)
    }
}

/// Frequency of DFT bin `k`: `k·fs/n_fft` below `n_fft/2`, negative above.
pub fn bin_frequency(k: usize, n_fft: usize, fs: f64) -> f64 {
    let f = k as f64 * fs / n_fft as f64;
    if k < n_fft / 2 {
        f
    } else {
        f - fs
    }
}

/// Short-time transform, stored frame-major: `frame(m)[k] = X[m, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StftMatrix {
    pub frames: usize,
    pub n_fft: usize,
    pub data: Vec<Complex64>,
}

impl StftMatrix {
    pub fn frame(&self, m: usize) -> &[Complex64] {
        &self.data[m * self.n_fft..(m + 1) * self.n_fft]
    }

    pub fn get(&self, m: usize, k: usize) -> Complex64 {
        self.data[m * self.n_fft + k]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }
}

fn for_each_frame(
    samples: &[Complex64],
    cfg: &StftConfig,
    mut sink: impl FnMut(usize, &[Complex64]),
) -> Result<usize> {
    cfg.validate()?;
    let frames = cfg.frame_count(samples.len())?;
    let window = hann_window(cfg.n_win, cfg.window)?;
    let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.n_fft];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for m in 0..frames {
        let start = m * cfg.hop;
        buf.fill(Complex64::new(0.0, 0.0));
        for (i, w) in window.iter().enumerate() {
            buf[i] = samples[start + i] * w;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        // the transform is referenced to absolute time n, not to the frame start
        let shift = (start % cfg.n_fft) as f64 / cfg.n_fft as f64;
        if shift != 0.0 {
            for (k, z) in buf.iter_mut().enumerate() {
                let cycles = (k as f64 * shift).fract();
                *z *= Complex64::from_polar(1.0, -TAU * cycles);
            }
        }
        sink(m, &buf);
    }
    Ok(frames)
}

/// `X[m,k] = Σ_n x[n] w[n − mR] e^{−j2πkn/N_fft}`.
pub fn stft(x: &IqSignal, cfg: &StftConfig) -> Result<StftMatrix> {
    let frames = cfg.frame_count(x.len())?;
    let mut data = Vec::with_capacity(frames * cfg.n_fft);
    for_each_frame(x.samples(), cfg, |_, spec| data.extend_from_slice(spec))?;
    Ok(StftMatrix { frames, n_fft: cfg.n_fft, data })
}

/// `|X[m,k]|` without materializing the complex matrix.
pub fn stft_magnitude(x: &IqSignal, cfg: &StftConfig) -> Result<(usize, Vec<f64>)> {
    let frames = cfg.frame_count(x.len())?;
    let mut data = Vec::with_capacity(frames * cfg.n_fft);
    for_each_frame(x.samples(), cfg, |_, spec| data.extend(spec.iter().map(|z| z.norm())))?;
    Ok((frames, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jamgen::{synth_stj, SignalConfig};
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn brute_force(x: &[Complex64], cfg: &StftConfig, m: usize, k: usize) -> Complex64 {
        let w = hann_window(cfg.n_win, cfg.window).unwrap();
        let mut acc = Complex64::new(0.0, 0.0);
        for (n, xn) in x.iter().enumerate() {
            let Some(i) = n.checked_sub(m * cfg.hop) else { continue };
            if i >= cfg.n_win {
                continue;
            }
            let arg = -TAU * (k as f64) * (n as f64) / cfg.n_fft as f64;
            acc += xn * w[i] * Complex64::from_polar(1.0, arg);
        }
        acc
    }

    #[test]
    fn matches_direct_dft() {
        let mut rng = rng_from_seed(17);
        let grid = SignalConfig::with_samples(1e3, 300).unwrap();
        let data: Vec<Complex64> = (0..300)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let x = IqSignal::new(data.clone(), grid).unwrap();
        for (n_win, n_fft, hop) in [(16, 16, 4), (32, 64, 7), (64, 256, 13)] {
            let cfg = StftConfig { n_win, n_fft, hop, out_h: 8, out_w: 8, ..StftConfig::full() };
            let s = stft(&x, &cfg).unwrap();
            assert_eq!(s.frames, (300 - n_win) / hop + 1);
            for m in [0, s.frames / 2, s.frames - 1] {
                for k in 0..n_fft {
                    let want = brute_force(&data, &cfg, m, k);
                    let got = s.get(m, k);
                    assert!((got - want).norm() <= 1e-6 * want.norm().max(1e-9), "m={m} k={k}");
                }
            }
        }
    }

    #[test]
    fn dc_input_concentrates_in_bin_zero() {
        let cfg = StftConfig { n_win: 32, n_fft: 32, hop: 8, ..StftConfig::full() };
        let grid = SignalConfig::with_samples(1.0, 128).unwrap();
        let x = IqSignal::new(vec![Complex64::new(1.0, 0.0); 128], grid).unwrap();
        let s = stft(&x, &cfg).unwrap();
        let wsum: f64 = hann_window(32, cfg.window).unwrap().iter().sum();
        for m in 0..s.frames {
            assert!((s.get(m, 0).norm() - wsum).abs() < 1e-9);
            for k in 2..31 {
                assert!(s.get(m, k).norm() < 1e-9 * wsum);
            }
        }
    }

    #[test]
    fn quarter_rate_tone_peaks_at_bin_1024() {
        let cfg = StftConfig::full();
        let x = synth_stj(5e6, 0.0, &SignalConfig::paper_default()).unwrap();
        let (frames, mags) = stft_magnitude(&x, &cfg).unwrap();
        assert_eq!(frames, (20_000 - 128) / 11 + 1);
        for m in 0..frames {
            let row = &mags[m * 4096..(m + 1) * 4096];
            let k = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert!(k.abs_diff(1024) <= 1, "frame {m} peaks at {k}");
        }
        assert_eq!(bin_frequency(1024, 4096, 20e6), 5e6);
        assert_eq!(bin_frequency(3072, 4096, 20e6), -5e6);
    }

    #[test]
    fn parseval_on_rectangular_frame() {
        let mut rng = rng_from_seed(3);
        let n = 64;
        let data: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let energy: f64 = data.iter().map(|z| z.norm_sqr()).sum();
        let mut buf = data.clone();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let spec_energy: f64 = buf.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        assert!(((energy - spec_energy) / energy).abs() < 1e-6);
    }

    #[test]
    fn short_signal_is_rejected() {
        let grid = SignalConfig::with_samples(1.0, 64).unwrap();
        let x = IqSignal::zeros(grid);
        assert!(stft(&x, &StftConfig::full()).is_err());
        let bad = StftConfig { hop: 0, ..StftConfig::full() };
        assert!(bad.validate().is_err());
    }
}
