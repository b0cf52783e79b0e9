//! Channel corruption: multipath-like amplitude fading, AWGN, tones and QPSK.
//!
//! Every interferer is scaled against an explicit `reference_power` (the clean
//! echo power), so the stated SIR is per interferer. All randomness comes from
//! an explicit `u64` seed.

use std::f64::consts::PI;

use num_complex::Complex32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::waveform::IqSignal;

/// Band-limited Gaussian envelope process parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FadingParams {
    /// One-sided cutoff as a fraction of the chirp bandwidth.
    pub relative_bandwidth: f64,
    /// Standard deviation of the envelope perturbation.
    pub sigma: f64,
}

impl Default for FadingParams {
    fn default() -> Self {
        Self {
            relative_bandwidth: 0.1,
            sigma: 0.3,
        }
    }
}

impl FadingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.relative_bandwidth > 0.0 && self.relative_bandwidth <= 1.0) {
            return Err(Error::Config(format!(
                "fading relative_bandwidth must be in (0, 1], got {}",
                self.relative_bandwidth
            )));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Config(format!(
                "fading sigma must be non-negative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneSpec {
    pub frequency_hz: f64,
    pub sir_db: f64,
    pub phase_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpskSpec {
    /// Occupied bandwidth; the symbol rate is `bandwidth_hz / (1 + rolloff)`.
    pub bandwidth_hz: f64,
    pub center_hz: f64,
    pub start_frac: f64,
    pub duration_frac: f64,
    pub sir_db: f64,
    pub rolloff: f64,
}

impl QpskSpec {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz <= sample_rate_hz) {
            return Err(Error::Argument(format!(
                "QPSK bandwidth {} Hz must be in (0, fs = {} Hz]",
                self.bandwidth_hz, sample_rate_hz
            )));
        }
        if self.center_hz.abs() > sample_rate_hz / 2.0 {
            return Err(Error::Argument(format!(
                "QPSK center {} Hz outside +/- fs/2",
                self.center_hz
            )));
        }
        if !(self.start_frac >= 0.0
            && self.duration_frac >= 0.0
            && self.start_frac + self.duration_frac <= 1.0 + 1e-12)
        {
            return Err(Error::Argument(format!(
                "QPSK placement start {} + duration {} must lie within [0, 1]",
                self.start_frac, self.duration_frac
            )));
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::Argument(format!(
                "QPSK rolloff must be in [0, 1], got {}",
                self.rolloff
            )));
        }
        if !self.sir_db.is_finite() {
            return Err(Error::Argument("QPSK SIR must be finite".into()));
        }
        Ok(())
    }

    pub fn symbol_rate_hz(&self) -> f64 {
        self.bandwidth_hz / (1.0 + self.rolloff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    /// Signal power over complex noise power, in dB.
    pub snr_db: f64,
}

fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// The real envelope perturbation `g[n]` used by [`apply_amplitude_fading`].
///
/// White Gaussian noise is brick-wall low-pass filtered to
/// `relative_bandwidth * chirp_bandwidth_hz` and rescaled to standard deviation `sigma`.
pub fn fading_envelope(
    num_samples: usize,
    sample_rate_hz: f64,
    chirp_bandwidth_hz: f64,
    params: &FadingParams,
    seed: u64,
) -> Result<Vec<f32>> {
    params.validate()?;
    if num_samples == 0 {
        return Err(Error::Argument(
            "fading envelope length must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex32> = (0..num_samples)
        .map(|_| Complex32::new(rng.sample::<f64, _>(StandardNormal) as f32, 0.0))
        .collect();
    let cutoff = params.relative_bandwidth * chirp_bandwidth_hz;
    fft::forward(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        if fft::bin_frequency(k, num_samples, sample_rate_hz).abs() > cutoff {
            *v = Complex32::new(0.0, 0.0);
        }
    }
    // The symmetric mask keeps the filtered sequence real up to rounding.
    fft::inverse(&mut buf);
    let mut g: Vec<f64> = buf.iter().map(|v| v.re as f64).collect();
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    for v in g.iter_mut() {
        *v -= mean;
    }
    let std = (g.iter().map(|v| v * v).sum::<f64>() / g.len() as f64).sqrt();
    let scale = if std > 0.0 { params.sigma / std } else { 0.0 };
    Ok(g.into_iter().map(|v| (v * scale) as f32).collect())
}

/// Multiplies `sig` by the envelope `1 + g[n]`.
pub fn apply_amplitude_fading(
    sig: &IqSignal,
    params: &FadingParams,
    chirp_bandwidth_hz: f64,
    seed: u64,
) -> Result<IqSignal> {
    sig.validate()?;
    params.validate()?;
    if params.sigma == 0.0 {
        return Ok(sig.clone());
    }
    let g = fading_envelope(
        sig.len(),
        sig.sample_rate_hz,
        chirp_bandwidth_hz,
        params,
        seed,
    )?;
    let samples = sig
        .samples
        .iter()
        .zip(&g)
        .map(|(s, gi)| s * (1.0 + gi))
        .collect();
    Ok(IqSignal {
        samples,
        sample_rate_hz: sig.sample_rate_hz,
    })
}

/// Adds circularly symmetric complex Gaussian noise at the requested SNR.
pub fn add_awgn(sig: &IqSignal, params: &NoiseParams, seed: u64) -> Result<IqSignal> {
    sig.validate()?;
    if !params.snr_db.is_finite() {
        return Err(Error::Argument(format!(
            "SNR must be finite, got {}",
            params.snr_db
        )));
    }
    let noise_power = sig.power() * db_to_power(-params.snr_db);
    let per_axis = (noise_power / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = sig
        .samples
        .iter()
        .map(|s| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            s + Complex32::new((re * per_axis) as f32, (im * per_axis) as f32)
        })
        .collect();
    Ok(IqSignal {
        samples,
        sample_rate_hz: sig.sample_rate_hz,
    })
}

/// Adds continuous-wave tones, each at its own SIR against `reference_power`.
pub fn add_tones(sig: &IqSignal, tones: &[ToneSpec], reference_power: f64) -> Result<IqSignal> {
    sig.validate()?;
    if !(reference_power > 0.0 && reference_power.is_finite()) {
        return Err(Error::Argument(format!(
            "reference power must be positive, got {reference_power}"
        )));
    }
    let fs = sig.sample_rate_hz;
    for t in tones {
        if t.frequency_hz.abs() > fs / 2.0 || !t.sir_db.is_finite() {
            return Err(Error::Argument(format!(
                "tone at {} Hz / {} dB outside +/- fs/2 or non-finite",
                t.frequency_hz, t.sir_db
            )));
        }
    }
    let mut out = sig.samples.clone();
    for t in tones {
        let amp = (reference_power * db_to_power(-t.sir_db)).sqrt();
        let step = 2.0 * PI * t.frequency_hz / fs;
        for (n, v) in out.iter_mut().enumerate() {
            let phase = (step * n as f64 + t.phase_rad).rem_euclid(2.0 * PI);
            *v += Complex32::new((amp * phase.cos()) as f32, (amp * phase.sin()) as f32);
        }
    }
    Ok(IqSignal {
        samples: out,
        sample_rate_hz: fs,
    })
}

/// `count` tones on a deterministic grid spanning `[-B/2, B/2]`, bin centres of
/// equal-width sub-bands, all at the same SIR and zero phase.
pub fn grid_tones(count: usize, bandwidth_hz: f64, sir_db: f64) -> Vec<ToneSpec> {
    (0..count)
        .map(|i| ToneSpec {
            frequency_hz: -bandwidth_hz / 2.0 + bandwidth_hz * (i as f64 + 0.5) / count as f64,
            sir_db,
            phase_rad: 0.0,
        })
        .collect()
}

/// Root-raised-cosine impulse response at time `t` (in symbol periods).
fn rrc(t: f64, beta: f64) -> f64 {
    if t.abs() < 1e-9 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    if beta > 0.0 && (t.abs() - 1.0 / (4.0 * beta)).abs() < 1e-9 {
        let a = PI / (4.0 * beta);
        return beta / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Pulse truncation, in symbols either side of the peak.
const RRC_SPAN_SYMBOLS: i64 = 8;

/// Unscaled QPSK burst: Gray-mapped symbols, RRC shaped, shifted to `center_hz`,
/// zero outside the active window. Returns the samples and the active range.
pub fn qpsk_waveform(
    num_samples: usize,
    sample_rate_hz: f64,
    spec: &QpskSpec,
    seed: u64,
) -> Result<(Vec<Complex32>, std::ops::Range<usize>)> {
    spec.validate(sample_rate_hz)?;
    let start = (spec.start_frac * num_samples as f64).round() as usize;
    let end = (((spec.start_frac + spec.duration_frac) * num_samples as f64).round() as usize)
        .min(num_samples);
    let mut out = vec![Complex32::new(0.0, 0.0); num_samples];
    if end <= start {
        return Ok((out, start..start));
    }

    let symbol_period = 1.0 / spec.symbol_rate_hz();
    let sym_of = |n: usize| n as f64 / sample_rate_hz / symbol_period;
    let first = sym_of(start).floor() as i64 - RRC_SPAN_SYMBOLS;
    let last = sym_of(end).ceil() as i64 + RRC_SPAN_SYMBOLS;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    // Gray mapping: 00 -> (+,+), 01 -> (-,+), 11 -> (-,-), 10 -> (+,-).
    let symbols: Vec<(f64, f64)> = (first..=last)
        .map(|_| match rng.random_range(0u8..4) {
            0b00 => (h, h),
            0b01 => (-h, h),
            0b11 => (-h, -h),
            _ => (h, -h),
        })
        .collect();

    for (n, slot) in out.iter_mut().enumerate().take(end).skip(start) {
        let ts = sym_of(n);
        let lo = (ts.floor() as i64 - RRC_SPAN_SYMBOLS).max(first);
        let hi = (ts.ceil() as i64 + RRC_SPAN_SYMBOLS).min(last);
        let (mut re, mut im) = (0.0, 0.0);
        for m in lo..=hi {
            let p = rrc(ts - m as f64, spec.rolloff);
            let (si, sq) = symbols[(m - first) as usize];
            re += si * p;
            im += sq * p;
        }
        let phase = (2.0 * PI * spec.center_hz * n as f64 / sample_rate_hz).rem_euclid(2.0 * PI);
        let rot = num_complex::Complex64::from_polar(1.0, phase);
        let v = num_complex::Complex64::new(re, im) * rot;
        *slot = Complex32::new(v.re as f32, v.im as f32);
    }
    Ok((out, start..end))
}

/// Adds a QPSK burst whose power over its active window is
/// `reference_power * 10^(-sir_db/10)`.
pub fn add_qpsk(
    sig: &IqSignal,
    spec: &QpskSpec,
    reference_power: f64,
    seed: u64,
) -> Result<IqSignal> {
    sig.validate()?;
    if !(reference_power > 0.0 && reference_power.is_finite()) {
        return Err(Error::Argument(format!(
            "reference power must be positive, got {reference_power}"
        )));
    }
    let (burst, active) = qpsk_waveform(sig.len(), sig.sample_rate_hz, spec, seed)?;
    if active.is_empty() {
        return Ok(sig.clone());
    }
    let active_power: f64 = burst[active.clone()]
        .iter()
        .map(|v| v.norm_sqr() as f64)
        .sum::<f64>()
        / active.len() as f64;
    if active_power == 0.0 {
        return Ok(sig.clone());
    }
    let scale = ((reference_power * db_to_power(-spec.sir_db)) / active_power).sqrt() as f32;
    let samples = sig
        .samples
        .iter()
        .zip(&burst)
        .map(|(s, b)| s + b * scale)
        .collect();
    Ok(IqSignal {
        samples,
        sample_rate_hz: sig.sample_rate_hz,
    })
}
