use num_complex::Complex64;

use crate::error::{bail, Result};

/// Order of the partial-band noise shaping filter (128 taps).
pub const PBNJ_FIR_ORDER: usize = 127;

/// Hann-windowed sinc low-pass of the given order with cutoff `fc` in cycles
/// per sample, normalized to unit DC gain.
pub fn lowpass_fir(order: usize, fc: f64) -> Result<Vec<f64>> {
    if !(fc > 0.0 && fc <= 0.5) {
        bail!(Parameter, "normalized cutoff {fc} must lie in (0, 0.5]");
    }
    let taps = order + 1;
    let center = order as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let x = n as f64 - center;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (std::f64::consts::TAU * fc * x).sin() / (std::f64::consts::PI * x)
            };
            let w = if order == 0 {
                1.0
            } else {
                (std::f64::consts::PI * n as f64 / order as f64).sin().powi(2)
            };
            sinc * w
        })
        .collect();
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= dc);
    Ok(h)
}

/// Direct convolution keeping the central `x.len()` outputs.
pub fn convolve_same(x: &[Complex64], h: &[f64]) -> Vec<Complex64> {
    let offset = (h.len() - 1) / 2;
    let n = x.len();
    (0..n)
        .map(|i| {
            // y[i] = Σ_k h[k] x[i + offset - k]
            let mut acc = Complex64::new(0.0, 0.0);
            let lo = (i + offset + 1).saturating_sub(n);
            let hi = (i + offset).min(h.len() - 1);
            for k in lo..=hi {
                acc += x[i + offset - k] * h[k];
            }
            acc
        })
        .collect()
}
