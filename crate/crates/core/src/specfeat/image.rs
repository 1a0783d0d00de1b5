use serde::{Deserialize, Serialize};

use super::stft::{bin_frequency, StftConfig, StftMatrix};
use crate::error::{bail, Result};

/// Row-major grid of `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            bail!(Size, "{}x{} grid needs {} values, got {}", height, width, height * width, data.len());
        }
        Ok(Self { height, width, data })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Sample positions of a half-pixel-centred resize from `src` to `dst` points.
fn source_coords(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

/// Bilinear resize with half-pixel centres and edge clamping.
pub fn resize_bilinear(src: &Grid, out_h: usize, out_w: usize) -> Result<Grid> {
    if src.height == 0 || src.width == 0 || out_h == 0 || out_w == 0 {
        bail!(Size, "cannot resize an empty grid");
    }
    let rows = source_coords(src.height, out_h);
    let cols = source_coords(src.width, out_w);
    let mut data = Vec::with_capacity(out_h * out_w);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            let top = src.get(r0, c0) * (1.0 - fc) + src.get(r0, c1) * fc;
            let bottom = src.get(r1, c0) * (1.0 - fc) + src.get(r1, c1) * fc;
            data.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    Grid::new(out_h, out_w, data)
}

/// Log-magnitude time-frequency image.
///
/// Rows run over frequency in ascending order with DC in the middle row;
/// columns run over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    pub image: Grid,
    /// Hz at the centre of each row.
    pub freq_axis: Vec<f64>,
    /// Seconds at the centre of each column (window centre).
    pub time_axis: Vec<f64>,
}

impl Spectrogram {
    pub fn max_db(&self) -> f64 {
        self.image.min_max().1
    }
}

/// `20 log10(|X|^γ / (max|X|^γ + ε))`, clamped at the configured floor,
/// centre-shifted and resized to `out_h × out_w`. `magnitudes` is
/// frame-major `|X[m,k]|`.
pub fn log_magnitude_from_magnitudes(
    frames: usize,
    magnitudes: &[f64],
    cfg: &StftConfig,
    fs: f64,
) -> Result<Spectrogram> {
    cfg.validate()?;
    let n_fft = cfg.n_fft;
    if frames == 0 || magnitudes.len() != frames * n_fft {
        bail!(Size, "expected {frames}x{n_fft} magnitudes, got {}", magnitudes.len());
    }
    let compressed: Vec<f64> = magnitudes.iter().map(|m| m.powf(cfg.gamma)).collect();
    let peak = compressed.iter().cloned().fold(0.0, f64::max);
    let denom = peak + cfg.epsilon;
    let half = n_fft / 2;
    let mut raw = vec![0.0; n_fft * frames];
    for m in 0..frames {
        for row in 0..n_fft {
            // row 0 holds the most negative frequency bin
            let k = (row + half) % n_fft;
            let v = 20.0 * (compressed[m * n_fft + k] / denom).log10();
            raw[row * frames + m] = if v.is_nan() { cfg.floor_db } else { v.max(cfg.floor_db) };
        }
    }
    let full = Grid::new(n_fft, frames, raw)?;
    let image = resize_bilinear(&full, cfg.out_h, cfg.out_w)?;
    let row_freq: Vec<f64> = (0..n_fft)
        .map(|row| bin_frequency((row + half) % n_fft, n_fft, fs))
        .collect();
    let freq_axis = source_coords(n_fft, cfg.out_h)
        .into_iter()
        .map(|(a, b, t)| row_freq[a] * (1.0 - t) + row_freq[b] * t)
        .collect();
    let centre = (cfg.n_win as f64 - 1.0) / 2.0;
    let time_axis = source_coords(frames, cfg.out_w)
        .into_iter()
        .map(|(a, b, t)| {
            let pos = a as f64 * (1.0 - t) + b as f64 * t;
            (pos * cfg.hop as f64 + centre) / fs
        })
        .collect();
    Ok(Spectrogram { image, freq_axis, time_axis })
}

pub fn log_magnitude_image(x: &StftMatrix, cfg: &StftConfig, fs: f64) -> Result<Spectrogram> {
    if x.n_fft != cfg.n_fft {
        bail!(Size, "matrix has {} bins, config expects {}", x.n_fft, cfg.n_fft);
    }
    log_magnitude_from_magnitudes(x.frames, &x.magnitudes(), cfg, fs)
}
