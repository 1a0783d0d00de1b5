use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ChannelConfig, IqSignal};
use crate::error::{bail, Result};

/// Weighted superposition `J[n] = Σ_k √P_k · J_k[n]` of unit-power components.
pub fn compose_compound(components: &[(&IqSignal, f64)]) -> Result<IqSignal> {
    let Some((first, _)) = components.first() else {
        bail!(Composition, "no components to compose");
    };
    let cfg = *first.config();
    let mut data = vec![Complex64::new(0.0, 0.0); cfg.n_samples()];
    for (signal, power) in components {
        if signal.config() != &cfg {
            bail!(
                Composition,
                "component grid {:?} differs from {:?}",
                signal.config(),
                cfg
            );
        }
        if !(power.is_finite() && *power >= 0.0) {
            bail!(Composition, "power weight {power} must be finite and non-negative");
        }
        let amp = power.sqrt();
        for (acc, z) in data.iter_mut().zip(signal.samples()) {
            *acc += z * amp;
        }
    }
    Ok(IqSignal::from_parts_unchecked(data, cfg))
}

/// `10 log10(mean|J|² / σ²)`.
pub fn measured_jnr_db(j: &IqSignal, noise_variance: f64) -> f64 {
    10.0 * (j.mean_power() / noise_variance).log10()
}

/// Rescales `j` so that its sample-average power sits `jnr_db` above the
/// noise variance.
pub fn apply_jnr(j: &IqSignal, jnr_db: f64, noise_variance: f64) -> Result<IqSignal> {
    if !(noise_variance.is_finite() && noise_variance > 0.0) {
        bail!(Parameter, "noise variance must be positive, got {noise_variance}");
    }
    if !jnr_db.is_finite() {
        bail!(Parameter, "JNR must be finite");
    }
    let power = j.mean_power();
    if !(power > 0.0 && power.is_finite()) {
        bail!(Normalization, "jamming signal has zero power");
    }
    let target = noise_variance * 10f64.powf(jnr_db / 10.0);
    Ok(j.scaled((target / power).sqrt()))
}

/// `x[n] + w[n]` with `w ~ CN(0, σ²)`: real and imaginary parts each carry
/// variance `σ²/2`.
pub fn add_awgn<R: Rng + ?Sized>(x: &IqSignal, ch: &ChannelConfig, rng: &mut R) -> Result<IqSignal> {
    ch.validate()?;
    let sd = (ch.noise_variance / 2.0).sqrt();
    let data = x
        .samples()
        .iter()
        .map(|z| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            z + Complex64::new(re * sd, im * sd)
        })
        .collect();
    Ok(IqSignal::from_parts_unchecked(data, *x.config()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jamgen::{synth_lfm, synth_stj, SignalConfig};
    use crate::rng::rng_from_seed;

    fn tone(f: f64) -> IqSignal {
        synth_stj(f, 0.3, &SignalConfig::with_samples(20e6, 256).unwrap()).unwrap()
    }

    #[test]
    fn single_unit_component_is_identity() {
        let a = tone(1e6);
        assert_eq!(compose_compound(&[(&a, 1.0)]).unwrap(), a);
    }

    #[test]
    fn equal_split_weights() {
        let a = tone(1e6);
        let b = tone(-3e6);
        let j = compose_compound(&[(&a, 0.5), (&b, 0.5)]).unwrap();
        let w = 0.5f64.sqrt();
        for n in 0..a.len() {
            let want = a.samples()[n] * w + b.samples()[n] * w;
            assert!((j.samples()[n] - want).norm() < 1e-15);
        }
    }

    #[test]
    fn power_ratio_of_three_db() {
        // oracle: bisection on P_A in (0, 1) for P_A / (1 - P_A) = 10^0.3
        let target = 10f64.powf(0.3);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid / (1.0 - mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let pa = 0.5 * (lo + hi);
        assert!((pa - 0.6661).abs() < 5e-5 && (1.0 - pa - 0.3339).abs() < 5e-5);
        let (pa2, pb2) = crate::jamgen::sampling::dual_powers(3.0);
        assert!((pa2 - pa).abs() < 1e-12 && (pb2 - (1.0 - pa)).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_grids() {
        let a = tone(1e6);
        let b = synth_stj(1e6, 0.0, &SignalConfig::with_samples(20e6, 128).unwrap()).unwrap();
        assert!(compose_compound(&[(&a, 0.5), (&b, 0.5)]).is_err());
        assert!(compose_compound(&[]).is_err());
        assert!(compose_compound(&[(&a, -1.0)]).is_err());
    }

    #[test]
    fn jnr_scale_factors() {
        let j = tone(2e6);
        let same = apply_jnr(&j, 0.0, 1.0).unwrap();
        assert!((same.samples()[3] - j.samples()[3]).norm() < 1e-15);
        let up = apply_jnr(&j, 10.0, 1.0).unwrap();
        assert!((up.samples()[3] / j.samples()[3] - 10f64.sqrt()).norm() < 1e-12);
        let loud = j.scaled(2.0);
        let down = apply_jnr(&loud, 0.0, 1.0).unwrap();
        assert!((down.samples()[3] / loud.samples()[3] - 0.5).norm() < 1e-12);
    }

    #[test]
    fn jnr_is_exact() {
        let j = synth_lfm(-5e6, 1e10, &SignalConfig::paper_default()).unwrap();
        for target in [-25.0, -3.5, 0.0, 7.25, 15.0] {
            let s = apply_jnr(&j, target, 1.0).unwrap();
            assert!((measured_jnr_db(&s, 1.0) - target).abs() < 1e-10);
        }
    }

    #[test]
    fn jnr_rejects_silence() {
        let z = IqSignal::zeros(SignalConfig::with_samples(1.0, 4).unwrap());
        assert!(apply_jnr(&z, 0.0, 1.0).is_err());
    }

    #[test]
    fn awgn_power_monte_carlo() {
        let z = IqSignal::zeros(SignalConfig::with_samples(1.0, 1_000_000).unwrap());
        let y = add_awgn(&z, &ChannelConfig::unit(3), &mut rng_from_seed(3)).unwrap();
        assert!((y.mean_power() - 1.0).abs() < 0.01);
        let re_var = y.samples().iter().map(|w| w.re * w.re).sum::<f64>() / 1e6;
        assert!((re_var - 0.5).abs() < 0.01);
    }

    #[test]
    fn awgn_vanishing_variance_and_determinism() {
        let x = tone(4e6);
        let ch = ChannelConfig { noise_variance: 1e-30, seed: 0 };
        let y = add_awgn(&x, &ch, &mut rng_from_seed(9)).unwrap();
        for (a, b) in x.samples().iter().zip(y.samples()) {
            assert!((a - b).norm() <= 1e-12 * a.norm());
        }
        let ch = ChannelConfig::unit(0);
        let a = add_awgn(&x, &ch, &mut rng_from_seed(9)).unwrap();
        let b = add_awgn(&x, &ch, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
        let bad = ChannelConfig { noise_variance: 0.0, seed: 0 };
        assert!(add_awgn(&x, &bad, &mut rng_from_seed(9)).is_err());
    }
}
