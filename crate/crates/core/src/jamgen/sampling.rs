use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    add_awgn, apply_jnr, compose_compound, synth_primitive, ChannelConfig, IqSignal, JammingClass,
    PrimitiveKind, PrimitiveParams, SignalConfig, Tone,
};
use crate::error::{bail, Result};

/// Parameter ranges of the generated corpus.
pub struct TableOne;

impl TableOne {
    pub const FS: f64 = 20e6;
    pub const DURATION: f64 = 1e-3;
    pub const CARRIER_MAX: f64 = 9.5e6;
    pub const MTJ_TONES: (usize, usize) = (5, 7);
    pub const MTJ_SPACING: (f64, f64) = (1.5e6, 3.0e6);
    pub const LFM_BANDWIDTH: f64 = 10e6;
    pub const LFM_PERIOD: f64 = 1e-3;
    /// Sweeps are kept inside `±LFM_EDGE`.
    pub const LFM_EDGE: f64 = 10e6;
    pub const PULSE_PRI: f64 = 1.0 / 6.0 * 1e-3;
    pub const PULSE_DUTY: (f64, f64) = (0.25, 0.35);
    /// Fraction of the sample rate.
    pub const PBNJ_BANDWIDTH: (f64, f64) = (0.10, 0.25);
    pub const POWER_RATIO_DB: f64 = 3.0;
    pub const JNR_DB: (f64, f64) = (-25.0, 15.0);
}

/// Class label plus every random draw needed to synthesize one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JammingSpec {
    pub class_id: u8,
    /// `(parameters, power weight P_k)` in the class's component order.
    pub components: Vec<(PrimitiveParams, f64)>,
    pub jnr_db: f64,
}

impl JammingSpec {
    pub fn class(&self) -> Result<JammingClass> {
        JammingClass::from_id(self.class_id)
    }

    pub fn total_power(&self) -> f64 {
        self.components.iter().map(|(_, p)| p).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let class = self.class()?;
        if self.components.is_empty() || self.components.len() > 3 {
            bail!(Parameter, "a spec holds 1 to 3 components, got {}", self.components.len());
        }
        let mut kinds: Vec<PrimitiveKind> = self.components.iter().map(|(p, _)| p.kind()).collect();
        let mut want = class.kinds().to_vec();
        kinds.sort();
        want.sort();
        if kinds != want {
            bail!(Parameter, "components {kinds:?} do not match class {}", class.name());
        }
        if self.components.iter().any(|(_, p)| !(p.is_finite() && *p >= 0.0)) {
            bail!(Parameter, "power weights must be finite and non-negative");
        }
        if self.total_power() <= 0.0 {
            bail!(Parameter, "total power must be positive");
        }
        Ok(())
    }
}

/// `(P_A, P_B)` with `P_A + P_B = 1` and `10 log10(P_A / P_B) = pr_db`.
pub(crate) fn dual_powers(pr_db: f64) -> (f64, f64) {
    let r = 10f64.powf(pr_db / 10.0);
    (r / (1.0 + r), 1.0 / (1.0 + r))
}

fn component_powers<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<f64> {
    let bound = TableOne::POWER_RATIO_DB;
    match count {
        1 => vec![1.0],
        2 => {
            let (a, b) = dual_powers(rng.random_range(-bound..=bound));
            vec![a, b]
        }
        _ => loop {
            // levels relative to the first component, rejecting draws whose
            // remaining pair is more than `bound` apart
            let mut levels = vec![0.0];
            levels.extend((1..count).map(|_| rng.random_range(-bound..=bound)));
            let spread = levels.iter().cloned().fold(f64::MIN, f64::max)
                - levels.iter().cloned().fold(f64::MAX, f64::min);
            if spread <= bound {
                let raw: Vec<f64> = levels.iter().map(|l| 10f64.powf(l / 10.0)).collect();
                let sum: f64 = raw.iter().sum();
                break raw.into_iter().map(|p| p / sum).collect();
            }
        },
    }
}

fn sample_params<R: Rng + ?Sized>(kind: PrimitiveKind, rng: &mut R) -> PrimitiveParams {
    let fmax = TableOne::CARRIER_MAX;
    match kind {
        PrimitiveKind::Stj => PrimitiveParams::Stj {
            f_c: rng.random_range(-fmax..=fmax),
            phi: rng.random_range(0.0..TAU),
        },
        PrimitiveKind::Mtj => {
            let (lo, hi) = TableOne::MTJ_TONES;
            let k = rng.random_range(lo..=hi);
            let (smin, smax) = TableOne::MTJ_SPACING;
            let gaps: Vec<f64> = (1..k).map(|_| rng.random_range(smin..=smax)).collect();
            let span: f64 = gaps.iter().sum();
            let first = rng.random_range(-fmax..=fmax - span);
            let mut f = first;
            let mut tones = Vec::with_capacity(k);
            for i in 0..k {
                if i > 0 {
                    f += gaps[i - 1];
                }
                tones.push(Tone { f, phi: rng.random_range(0.0..TAU) });
            }
            PrimitiveParams::Mtj { tones }
        }
        PrimitiveKind::Lfm => {
            let rate = TableOne::LFM_BANDWIDTH / TableOne::LFM_PERIOD;
            let edge = TableOne::LFM_EDGE;
            let room = 2.0 * edge - TableOne::LFM_BANDWIDTH;
            let offset = rng.random_range(0.0..=room);
            if rng.random_bool(0.5) {
                PrimitiveParams::Lfm { f_start: -edge + offset, mu: rate }
            } else {
                PrimitiveParams::Lfm { f_start: edge - offset, mu: -rate }
            }
        }
        PrimitiveKind::Pulse => {
            let (dlo, dhi) = TableOne::PULSE_DUTY;
            let duty = rng.random_range(dlo..=dhi);
            PrimitiveParams::Pulse {
                f_c: rng.random_range(-fmax..=fmax),
                pri: TableOne::PULSE_PRI,
                tau: duty * TableOne::PULSE_PRI,
            }
        }
        PrimitiveKind::Pbnj => {
            let (blo, bhi) = TableOne::PBNJ_BANDWIDTH;
            let b_jam = rng.random_range(blo..=bhi) * TableOne::FS;
            let half = TableOne::FS / 2.0 - b_jam / 2.0;
            PrimitiveParams::Pbnj { f_c: rng.random_range(-half..=half), b_jam }
        }
    }
}

/// Draws a random instance of `class_id` at `jnr_db`.
pub fn sample_spec<R: Rng + ?Sized>(class_id: u8, jnr_db: f64, rng: &mut R) -> Result<JammingSpec> {
    let class = JammingClass::from_id(class_id)?;
    if !jnr_db.is_finite() {
        bail!(Parameter, "JNR must be finite");
    }
    let params: Vec<PrimitiveParams> = class.kinds().iter().map(|&k| sample_params(k, rng)).collect();
    let powers = component_powers(params.len(), rng);
    Ok(JammingSpec {
        class_id,
        components: params.into_iter().zip(powers).collect(),
        jnr_db,
    })
}

/// Jamming-only waveform: unit-power components, weighted superposition,
/// then calibration to the spec's JNR against `noise_variance`.
pub fn synthesize_jamming<R: Rng + ?Sized>(
    spec: &JammingSpec,
    cfg: &SignalConfig,
    noise_variance: f64,
    rng: &mut R,
) -> Result<IqSignal> {
    spec.validate()?;
    let mut parts = Vec::with_capacity(spec.components.len());
    for (params, power) in &spec.components {
        let raw = synth_primitive(params, cfg, rng)?;
        let p = raw.mean_power();
        if p <= 0.0 {
            bail!(Normalization, "{} component has zero power", params.kind().name());
        }
        parts.push((raw.scaled(p.sqrt().recip()), *power));
    }
    let refs: Vec<(&IqSignal, f64)> = parts.iter().map(|(s, p)| (s, *p)).collect();
    let j = compose_compound(&refs)?;
    apply_jnr(&j, spec.jnr_db, noise_variance)
}

/// Received sequence `x = J + w`. Returns `(J, x)`.
pub fn realize<R: Rng + ?Sized>(
    spec: &JammingSpec,
    cfg: &SignalConfig,
    channel: &ChannelConfig,
    rng: &mut R,
) -> Result<(IqSignal, IqSignal)> {
    let j = synthesize_jamming(spec, cfg, channel.noise_variance, rng)?;
    let x = add_awgn(&j, channel, rng)?;
    Ok((j, x))
}
