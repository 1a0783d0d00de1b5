use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::filter::{convolve_same, lowpass_fir, PBNJ_FIR_ORDER};
use super::{IqSignal, SignalConfig};
use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PrimitiveKind {
    Stj,
    Mtj,
    Lfm,
    Pulse,
    Pbnj,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 5] = [Self::Stj, Self::Mtj, Self::Lfm, Self::Pulse, Self::Pbnj];

    pub fn name(self) -> &'static str {
        match self {
            Self::Stj => "STJ",
            Self::Mtj => "MTJ",
            Self::Lfm => "LFM",
            Self::Pulse => "Pulse",
            Self::Pbnj => "PBNJ",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    /// Hz
    pub f: f64,
    /// radians
    pub phi: f64,
}

/// Fully instantiated parameters of one jamming primitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PrimitiveParams {
    Stj { f_c: f64, phi: f64 },
    Mtj { tones: Vec<Tone> },
    /// `mu` is the chirp rate in Hz/s, `±B_sw / T_sw`.
    Lfm { f_start: f64, mu: f64 },
    Pulse { f_c: f64, pri: f64, tau: f64 },
    Pbnj { f_c: f64, b_jam: f64 },
}

impl PrimitiveParams {
    pub fn kind(&self) -> PrimitiveKind {
        match self {
            Self::Stj { .. } => PrimitiveKind::Stj,
            Self::Mtj { .. } => PrimitiveKind::Mtj,
            Self::Lfm { .. } => PrimitiveKind::Lfm,
            Self::Pulse { .. } => PrimitiveKind::Pulse,
            Self::Pbnj { .. } => PrimitiveKind::Pbnj,
        }
    }
}

fn check_in_band(f: f64, cfg: &SignalConfig, what: &str) -> Result<()> {
    if !f.is_finite() || f.abs() >= cfg.nyquist() {
        bail!(Parameter, "{what} {f} Hz outside (-{n}, {n}) Hz", n = cfg.nyquist());
    }
    Ok(())
}

/// `e^{j 2π · cycles}` with the integer part of `cycles` removed first, which
/// keeps the argument small for long records.
fn phasor(cycles: f64) -> Complex64 {
    let frac = cycles - cycles.floor();
    Complex64::from_polar(1.0, TAU * frac)
}

/// Single tone `e^{j(2π f_c n/fs + φ)}`.
pub fn synth_stj(f_c: f64, phi: f64, cfg: &SignalConfig) -> Result<IqSignal> {
    check_in_band(f_c, cfg, "carrier")?;
    let step = f_c / cfg.fs();
    let phase0 = phi / TAU;
    let data = (0..cfg.n_samples())
        .map(|n| phasor(step * n as f64 + phase0))
        .collect();
    Ok(IqSignal::from_parts_unchecked(data, *cfg))
}

/// Unscaled superposition of `K` tones; the total power is left to the JNR
/// calibration.
pub fn synth_mtj(tones: &[Tone], cfg: &SignalConfig) -> Result<IqSignal> {
    if tones.is_empty() {
        bail!(Parameter, "multi-tone jamming needs at least one tone");
    }
    for (i, t) in tones.iter().enumerate() {
        check_in_band(t.f, cfg, "tone")?;
        if tones[..i].iter().any(|u| u.f == t.f) {
            bail!(Parameter, "duplicate tone frequency {} Hz", t.f);
        }
    }
    let mut data = vec![Complex64::new(0.0, 0.0); cfg.n_samples()];
    for t in tones {
        let step = t.f / cfg.fs();
        let phase0 = t.phi / TAU;
        for (n, z) in data.iter_mut().enumerate() {
            *z += phasor(step * n as f64 + phase0);
        }
    }
    Ok(IqSignal::from_parts_unchecked(data, *cfg))
}

/// Linear chirp `e^{j2π(f_start t + ½ μ t²)}`.
///
/// The instantaneous frequency `f_start + μ t` is not range checked: a sweep
/// that leaves `±fs/2` simply wraps around the sampled band.
pub fn synth_lfm(f_start: f64, mu: f64, cfg: &SignalConfig) -> Result<IqSignal> {
    if !(f_start.is_finite() && mu.is_finite()) {
        bail!(Parameter, "chirp parameters must be finite");
    }
    let data = (0..cfg.n_samples())
        .map(|n| {
            let t = cfg.time(n);
            phasor(f_start * t + 0.5 * mu * t * t)
        })
        .collect();
    Ok(IqSignal::from_parts_unchecked(data, *cfg))
}

/// Sample counts `(N_PRI, N_τ)` for a pulse train.
pub fn pulse_lengths(pri: f64, tau: f64, fs: f64) -> (usize, usize) {
    // tolerate products that land one ulp below an integer, e.g. 0.05 ms · 20 MHz
    let count = |x: f64| (x * fs * (1.0 + 1e-12)).floor().max(0.0) as usize;
    (count(pri), count(tau))
}

/// Carrier gated on for the first `N_τ` samples of every `N_PRI` block.
pub fn synth_pulse(f_c: f64, pri: f64, tau: f64, cfg: &SignalConfig) -> Result<IqSignal> {
    check_in_band(f_c, cfg, "carrier")?;
    let (n_pri, n_tau) = pulse_lengths(pri, tau, cfg.fs());
    if n_pri < 1 || n_tau < 1 {
        bail!(Parameter, "pulse needs N_PRI >= 1 and N_tau >= 1, got {n_pri} and {n_tau}");
    }
    if n_tau >= n_pri {
        bail!(Parameter, "pulse width {n_tau} samples must be shorter than PRI {n_pri} samples");
    }
    let step = f_c / cfg.fs();
    let data = (0..cfg.n_samples())
        .map(|n| {
            if n % n_pri < n_tau {
                phasor(step * n as f64)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok(IqSignal::from_parts_unchecked(data, *cfg))
}

/// Complex Gaussian noise low-passed to `b_jam / 2`, mixed to `f_c` and
/// rescaled to unit mean power. `b_jam >= fs` skips the filter entirely.
pub fn synth_pbnj<R: Rng + ?Sized>(
    f_c: f64,
    b_jam: f64,
    cfg: &SignalConfig,
    rng: &mut R,
) -> Result<IqSignal> {
    if !(b_jam.is_finite() && b_jam > 0.0 && b_jam <= cfg.fs()) {
        bail!(Parameter, "noise bandwidth {b_jam} Hz must lie in (0, fs]");
    }
    if !f_c.is_finite() || f_c.abs() + b_jam / 2.0 > cfg.nyquist() * (1.0 + 1e-12) {
        bail!(Parameter, "band {f_c} ± {} Hz leaves the Nyquist range", b_jam / 2.0);
    }
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let noise: Vec<Complex64> = (0..cfg.n_samples())
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        })
        .collect();
    let shaped = if b_jam >= cfg.fs() {
        noise
    } else {
        let h = lowpass_fir(PBNJ_FIR_ORDER, b_jam / 2.0 / cfg.fs())?;
        convolve_same(&noise, &h)
    };
    let step = f_c / cfg.fs();
    let mixed: Vec<Complex64> = shaped
        .iter()
        .enumerate()
        .map(|(n, z)| z * phasor(step * n as f64))
        .collect();
    let power = mixed.iter().map(|z| z.norm_sqr()).sum::<f64>() / mixed.len() as f64;
    if power <= 0.0 {
        bail!(Normalization, "shaped noise has zero power");
    }
    let gain = power.sqrt().recip();
    let data = mixed.into_iter().map(|z| z * gain).collect();
    Ok(IqSignal::from_parts_unchecked(data, *cfg))
}

/// Dispatches on the parameter variant. Only PBNJ consumes randomness.
pub fn synth_primitive<R: Rng + ?Sized>(
    params: &PrimitiveParams,
    cfg: &SignalConfig,
    rng: &mut R,
) -> Result<IqSignal> {
    match params {
        PrimitiveParams::Stj { f_c, phi } => synth_stj(*f_c, *phi, cfg),
        PrimitiveParams::Mtj { tones } => synth_mtj(tones, cfg),
        PrimitiveParams::Lfm { f_start, mu } => synth_lfm(*f_start, *mu, cfg),
        PrimitiveParams::Pulse { f_c, pri, tau } => synth_pulse(*f_c, *pri, *tau, cfg),
        PrimitiveParams::Pbnj { f_c, b_jam } => synth_pbnj(*f_c, *b_jam, cfg, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use std::f64::consts::PI;

    fn grid(fs: f64, n: usize) -> SignalConfig {
        SignalConfig::with_samples(fs, n).unwrap()
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn stj_dc_is_all_ones() {
        let x = synth_stj(0.0, 0.0, &grid(1e6, 8)).unwrap();
        assert!(x.samples().iter().all(|z| *z == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn stj_quarter_rate_cycles_through_unit_axes() {
        let x = synth_stj(5e6, 0.0, &grid(20e6, 8)).unwrap();
        let expect = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
        ];
        for (n, z) in x.samples().iter().enumerate() {
            assert!(close(*z, expect[n % 4], 1e-12), "n={n} z={z}");
        }
    }

    #[test]
    fn stj_at_band_edge_has_unit_power() {
        let x = synth_stj(9.5e6, PI / 3.0, &SignalConfig::paper_default()).unwrap();
        assert!((x.mean_power() - 1.0).abs() < 1e-12);
        assert!(x.samples().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn stj_rejects_out_of_band_carrier() {
        assert!(synth_stj(10e6, 0.0, &SignalConfig::paper_default()).is_err());
        assert!(synth_stj(-10.5e6, 0.0, &SignalConfig::paper_default()).is_err());
    }

    #[test]
    fn mtj_single_tone_matches_stj() {
        let cfg = grid(20e6, 64);
        let a = synth_mtj(&[Tone { f: 1.3e6, phi: 0.4 }], &cfg).unwrap();
        let b = synth_stj(1.3e6, 0.4, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mtj_conjugate_pair_is_real_cosine() {
        let cfg = grid(20e6, 200);
        let tones = [Tone { f: 1e6, phi: 0.0 }, Tone { f: -1e6, phi: 0.0 }];
        let x = synth_mtj(&tones, &cfg).unwrap();
        for (n, z) in x.samples().iter().enumerate() {
            let want = 2.0 * (TAU * 1e6 * n as f64 / 20e6).cos();
            assert!(z.im.abs() < 1e-12 && (z.re - want).abs() < 1e-12);
        }
    }

    #[test]
    fn mtj_six_tones_have_power_near_six() {
        // time-average oracle: cross terms of distinct tones average out
        let cfg = SignalConfig::paper_default();
        let tones: Vec<Tone> = (0..6)
            .map(|k| Tone { f: -5e6 + 2e6 * k as f64, phi: 0.7 * k as f64 })
            .collect();
        let x = synth_mtj(&tones, &cfg).unwrap();
        let direct: f64 = (0..cfg.n_samples())
            .map(|n| {
                let t = n as f64 / cfg.fs();
                let s: Complex64 = tones
                    .iter()
                    .map(|tn| Complex64::from_polar(1.0, TAU * tn.f * t + tn.phi))
                    .sum();
                s.norm_sqr()
            })
            .sum::<f64>()
            / cfg.n_samples() as f64;
        assert!((x.mean_power() - direct).abs() < 1e-9);
        assert!((x.mean_power() - 6.0).abs() <= 0.12, "power {}", x.mean_power());
    }

    #[test]
    fn mtj_rejects_duplicates_and_empty() {
        let cfg = grid(20e6, 16);
        assert!(synth_mtj(&[], &cfg).is_err());
        let t = Tone { f: 1e6, phi: 0.0 };
        assert!(synth_mtj(&[t, t], &cfg).is_err());
    }

    #[test]
    fn lfm_without_sweep_is_a_tone() {
        let cfg = grid(20e6, 500);
        let a = synth_lfm(2.5e6, 0.0, &cfg).unwrap();
        let b = synth_stj(2.5e6, 0.0, &cfg).unwrap();
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert!(close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn lfm_phase_increments_grow_linearly() {
        // finite-difference oracle: second difference of the unwrapped phase
        // equals μ/fs² cycles per sample²
        let cfg = SignalConfig::paper_default();
        let mu = 10e6 / 1e-3;
        let f_start = -5e6;
        let x = synth_lfm(f_start, mu, &cfg).unwrap();
        let s = x.samples();
        let inst: Vec<f64> = s.windows(2).map(|w| (w[1] * w[0].conj()).arg() / TAU).collect();
        let slope = mu / (cfg.fs() * cfg.fs());
        // least-squares slope over the record
        let n = inst.len() as f64;
        let mx = (n - 1.0) / 2.0;
        let my = inst.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (i, y) in inst.iter().enumerate() {
            sxy += (i as f64 - mx) * (y - my);
            sxx += (i as f64 - mx).powi(2);
        }
        let fitted = sxy / sxx;
        assert!(((fitted - slope) / slope).abs() < 1e-6, "fitted {fitted} vs {slope}");
        // at t = 0.5 ms the instantaneous frequency f_start + μt is 0 Hz
        let k = cfg.n_samples() / 2;
        assert!((inst[k] * cfg.fs()).abs() < 600.0, "f = {}", inst[k] * cfg.fs());
        assert!(s.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn pulse_gating_follows_the_definition() {
        let cfg = grid(10.0, 20);
        let x = synth_pulse(0.0, 1.0, 0.3, &cfg).unwrap();
        let on: Vec<usize> = x
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(on, vec![0, 1, 2, 10, 11, 12]);
    }

    #[test]
    fn pulse_duty_cycle_at_paper_settings() {
        let cfg = SignalConfig::paper_default();
        let pri = 1.0 / 6.0 * 1e-3;
        let tau = 0.3 * pri;
        let (n_pri, n_tau) = pulse_lengths(pri, tau, cfg.fs());
        assert_eq!((n_pri, n_tau), (3333, 1000));
        let x = synth_pulse(1e6, pri, tau, &cfg).unwrap();
        let on = x.samples()[..n_pri].iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(on, n_tau);
        // every window of exactly N_PRI samples holds N_tau active samples
        let active: Vec<u32> = x.samples().iter().map(|z| (z.norm() > 0.0) as u32).collect();
        for start in (0..active.len() - n_pri).step_by(97) {
            assert_eq!(active[start..start + n_pri].iter().sum::<u32>() as usize, n_tau);
        }
    }

    #[test]
    fn pulse_near_full_duty_has_few_gaps() {
        let cfg = grid(10.0, 100);
        let x = synth_pulse(0.0, 1.0, 0.9, &cfg).unwrap();
        let zeros = x.samples().iter().filter(|z| z.norm() == 0.0).count();
        assert!(zeros <= 100 / 10);
        assert!(synth_pulse(0.0, 1.0, 1.0, &cfg).is_err());
        assert!(synth_pulse(0.0, 1.0, 0.05, &cfg).is_err());
    }

    #[test]
    fn pbnj_is_deterministic_and_unit_power() {
        let cfg = SignalConfig::paper_default();
        let a = synth_pbnj(2e6, 3e6, &cfg, &mut rng_from_seed(5)).unwrap();
        let b = synth_pbnj(2e6, 3e6, &cfg, &mut rng_from_seed(5)).unwrap();
        assert_eq!(a, b);
        assert!((a.mean_power() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pbnj_band_must_fit() {
        let cfg = SignalConfig::paper_default();
        let mut rng = rng_from_seed(1);
        assert!(synth_pbnj(9e6, 3e6, &cfg, &mut rng).is_err());
        assert!(synth_pbnj(0.0, 0.0, &cfg, &mut rng).is_err());
        assert!(synth_pbnj(0.0, 21e6, &cfg, &mut rng).is_err());
    }
}
