//! Triangular-sweep CWLFM waveform generation and continuous path delays.

use std::f64::consts::PI;

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

/// Fraction of the record length used as the largest training delay.
pub const MAX_DELAY_FRACTION: f64 = 0.01;

/// Parameters of a single up-then-down linear frequency sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChirpParams {
    pub sample_rate_hz: f64,
    pub bandwidth_hz: f64,
    pub num_samples: usize,
    pub amplitude: f32,
}

impl Default for ChirpParams {
    fn default() -> Self {
        Self::desk_scale()
    }
}

impl ChirpParams {
    /// 1000-sample record at 30 MHz.
    pub fn desk_scale() -> Self {
        Self {
            sample_rate_hz: 30e6,
            bandwidth_hz: 24e6,
            num_samples: 1000,
            amplitude: 1.0,
        }
    }

    /// 40000-sample record at 30 MHz.
    pub fn full_scale() -> Self {
        Self {
            num_samples: 40_000,
            ..Self::desk_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::Config(format!(
                "sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(Error::Config(format!(
                "bandwidth_hz must be positive, got {}",
                self.bandwidth_hz
            )));
        }
        if self.bandwidth_hz >= self.sample_rate_hz {
            return Err(Error::Config(format!(
                "bandwidth_hz ({}) must be below sample_rate_hz ({}) for complex sampling",
                self.bandwidth_hz, self.sample_rate_hz
            )));
        }
        if self.num_samples == 0 || !self.num_samples.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "num_samples must be even and positive so the up/down sweeps are equal halves, got {}",
                self.num_samples
            )));
        }
        if !self.num_samples.is_multiple_of(8) {
            return Err(Error::Config(format!(
                "num_samples must be divisible by 8 (three factor-2 pooling stages), got {}",
                self.num_samples
            )));
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::Config(format!(
                "amplitude must be positive, got {}",
                self.amplitude
            )));
        }
        Ok(())
    }

    /// Record duration T in seconds.
    pub fn duration_s(&self) -> f64 {
        self.num_samples as f64 / self.sample_rate_hz
    }

    /// Sweep slope k = B / (T/2) in Hz/s.
    pub fn slope_hz_per_s(&self) -> f64 {
        self.bandwidth_hz / (self.duration_s() / 2.0)
    }

    /// Largest training delay, `0.01 * T`.
    pub fn max_delay_s(&self) -> f64 {
        MAX_DELAY_FRACTION * self.duration_s()
    }
}

/// Complex baseband samples plus their sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct IqSignal {
    pub samples: Vec<Complex32>,
    pub sample_rate_hz: f64,
}

impl IqSignal {
    pub fn new(samples: Vec<Complex32>, sample_rate_hz: f64) -> Result<Self> {
        let sig = Self {
            samples,
            sample_rate_hz,
        };
        sig.validate()?;
        Ok(sig)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Argument("signal must not be empty".into()));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::Argument(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if let Some(i) = self
            .samples
            .iter()
            .position(|s| !(s.re.is_finite() && s.im.is_finite()))
        {
            return Err(Error::Argument(format!("non-finite sample at index {i}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean squared magnitude.
    pub fn power(&self) -> f64 {
        self.energy() / self.samples.len() as f64
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr() as f64).sum()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub(crate) fn same_layout(&self, other: &IqSignal) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Dimension(format!(
                "signal lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        if self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::Dimension(format!(
                "sample rates differ: {} vs {}",
                self.sample_rate_hz, other.sample_rate_hz
            )));
        }
        Ok(())
    }
}

/// Generates one constant-modulus up-then-down sweep from -B/2 to +B/2 and back.
///
/// The phase is accumulated in f64 and is continuous at the turnaround.
pub fn generate_cwlfm(params: &ChirpParams) -> Result<IqSignal> {
    params.validate()?;
    let fs = params.sample_rate_hz;
    let half_b = params.bandwidth_hz / 2.0;
    let k = params.slope_hz_per_s();
    let half_t = params.duration_s() / 2.0;
    let mid_phase = 2.0 * PI * (-half_b * half_t + 0.5 * k * half_t * half_t);
    let amp = params.amplitude;

    let samples = (0..params.num_samples)
        .map(|n| {
            let t = n as f64 / fs;
            let phase = if t < half_t {
                2.0 * PI * (-half_b * t + 0.5 * k * t * t)
            } else {
                let tp = t - half_t;
                mid_phase + 2.0 * PI * (half_b * tp - 0.5 * k * tp * tp)
            };
            let phase = phase.rem_euclid(2.0 * PI);
            Complex32::new(amp * phase.cos() as f32, amp * phase.sin() as f32)
        })
        .collect();
    Ok(IqSignal {
        samples,
        sample_rate_hz: fs,
    })
}

/// Circularly delays `sig` by `delay_s` seconds using a frequency-domain phase ramp.
///
/// Fractional-sample delays are exact band-limited shifts; integer-sample delays
/// reduce to circular shifts.
pub fn apply_delay(sig: &IqSignal, delay_s: f64) -> Result<IqSignal> {
    if !delay_s.is_finite() || delay_s < 0.0 {
        return Err(Error::Argument(format!(
            "delay must be finite and non-negative, got {delay_s}"
        )));
    }
    if delay_s == 0.0 {
        return Ok(sig.clone());
    }
    let n = sig.len();
    let fs = sig.sample_rate_hz;
    let mut buf = sig.samples.clone();
    fft::forward(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let f = fft::bin_frequency(k, n, fs);
        // Wrap the phase in f64 before narrowing so long delays keep precision.
        let phase = (-2.0 * PI * f * delay_s).rem_euclid(2.0 * PI);
        *v *= Complex32::new(phase.cos() as f32, phase.sin() as f32);
    }
    fft::inverse(&mut buf);
    Ok(IqSignal {
        samples: buf,
        sample_rate_hz: fs,
    })
}

/// Whether `delay_s` lies in the training range `[0, 0.01 T]` of `sig`.
pub fn delay_in_training_range(sig: &IqSignal, delay_s: f64) -> bool {
    (0.0..=MAX_DELAY_FRACTION * sig.duration_s() * (1.0 + 1e-12)).contains(&delay_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SPEED_OF_LIGHT_M_S;

    fn rel_err(a: &[Complex32], b: &[Complex32]) -> f64 {
        let num: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm_sqr() as f64)
            .sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr() as f64).sum();
        (num / den).sqrt()
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = ChirpParams::desk_scale();
        p.bandwidth_hz = 31e6;
        assert!(matches!(p.validate(), Err(Error::Config(m)) if m.contains("bandwidth_hz")));
        let mut p = ChirpParams::desk_scale();
        p.num_samples = 1004;
        assert!(matches!(p.validate(), Err(Error::Config(m)) if m.contains("divisible by 8")));
        let mut p = ChirpParams::desk_scale();
        p.num_samples = 999;
        assert!(matches!(p.validate(), Err(Error::Config(m)) if m.contains("even")));
    }

    #[test]
    fn constant_modulus() {
        let p = ChirpParams {
            amplitude: 2.5,
            ..ChirpParams::desk_scale()
        };
        let s = generate_cwlfm(&p).unwrap();
        assert_eq!(s.len(), 1000);
        for v in &s.samples {
            assert!((v.norm() - 2.5).abs() < 1e-5);
        }
    }

    #[test]
    fn spectral_occupancy_within_band() {
        // Periodogram oracle: direct DFT, not the library FFT.
        let p = ChirpParams::desk_scale();
        let s = generate_cwlfm(&p).unwrap();
        let n = s.len();
        let mut total = 0.0;
        let mut inband = 0.0;
        for k in 0..n {
            let mut acc = num_complex::Complex64::new(0.0, 0.0);
            for (i, v) in s.samples.iter().enumerate() {
                let ang = -2.0 * PI * (k * i % n) as f64 / n as f64;
                acc += num_complex::Complex64::new(v.re as f64, v.im as f64)
                    * num_complex::Complex64::from_polar(1.0, ang);
            }
            let e = acc.norm_sqr();
            total += e;
            if fft::bin_frequency(k, n, p.sample_rate_hz).abs() <= 12.5e6 {
                inband += e;
            }
        }
        assert!(
            inband / total >= 0.99,
            "in-band fraction {}",
            inband / total
        );
    }

    #[test]
    fn instantaneous_frequency_endpoints() {
        let p = ChirpParams::desk_scale();
        let s = generate_cwlfm(&p).unwrap();
        let inst = |n: usize| {
            let d = s.samples[n + 1] * s.samples[n].conj();
            d.arg() as f64 * p.sample_rate_hz / (2.0 * PI)
        };
        let bin = p.sample_rate_hz / p.num_samples as f64;
        // One-sample difference is biased by half a sample of sweep.
        let tol = p.slope_hz_per_s() / p.sample_rate_hz + bin;
        assert!((inst(0) + 12e6).abs() < tol, "{}", inst(0));
        assert!((inst(500) - 12e6).abs() < tol, "{}", inst(500));
        assert!((inst(998) + 12e6).abs() < 2.0 * tol, "{}", inst(998));
    }

    #[test]
    fn phase_continuous_at_turnaround() {
        let p = ChirpParams::desk_scale();
        let s = generate_cwlfm(&p).unwrap();
        let step_before = (s.samples[499] * s.samples[498].conj()).arg();
        let step_across = (s.samples[500] * s.samples[499].conj()).arg();
        let step_after = (s.samples[501] * s.samples[500].conj()).arg();
        assert!((step_across - step_before).abs() < 0.1);
        assert!((step_across - step_after).abs() < 0.1);
    }

    #[test]
    fn autocorrelation_peak_at_zero_lag() {
        let p = ChirpParams {
            amplitude: 0.5,
            ..ChirpParams::desk_scale()
        };
        let s = generate_cwlfm(&p).unwrap();
        let n = s.len();
        let r = |lag: usize| {
            let mut acc = num_complex::Complex64::new(0.0, 0.0);
            for i in 0..n {
                let a = s.samples[(i + lag) % n];
                let b = s.samples[i];
                acc += num_complex::Complex64::new(a.re as f64, a.im as f64)
                    * num_complex::Complex64::new(b.re as f64, -b.im as f64);
            }
            acc.norm()
        };
        let r0 = r(0);
        assert!((r0 - n as f64 * 0.25).abs() < 1e-3);
        for lag in 1..n {
            assert!(r(lag) < r0);
        }
    }

    #[test]
    fn zero_delay_is_identity() {
        let s = generate_cwlfm(&ChirpParams::desk_scale()).unwrap();
        let d = apply_delay(&s, 0.0).unwrap();
        assert!(rel_err(&d.samples, &s.samples) < 1e-5);
    }

    #[test]
    fn integer_delay_is_circular_shift() {
        let s = generate_cwlfm(&ChirpParams::desk_scale()).unwrap();
        let n = s.len();
        for k in [1usize, 7, 10, 333] {
            let d = apply_delay(&s, k as f64 / s.sample_rate_hz).unwrap();
            let shifted: Vec<Complex32> = (0..n).map(|i| s.samples[(i + n - k) % n]).collect();
            assert!(rel_err(&d.samples, &shifted) < 1e-4, "k={k}");
        }
    }

    #[test]
    fn negative_delay_rejected() {
        let s = generate_cwlfm(&ChirpParams::desk_scale()).unwrap();
        assert!(matches!(apply_delay(&s, -1e-9), Err(Error::Argument(_))));
    }

    #[test]
    fn max_training_delay_maps_to_2000_m_at_full_scale() {
        let p = ChirpParams::full_scale();
        let tau = p.max_delay_s();
        assert!((tau - 13.333_333e-6).abs() < 1e-11);
        let range = SPEED_OF_LIGHT_M_S * tau / 2.0;
        assert!((range - 2000.0).abs() < 1e-6, "{range}");
    }

    #[test]
    fn delay_is_additive_and_energy_preserving() {
        let s = generate_cwlfm(&ChirpParams::desk_scale()).unwrap();
        let (a, b) = (37.3e-9, 101.9e-9);
        let ab = apply_delay(&apply_delay(&s, a).unwrap(), b).unwrap();
        let direct = apply_delay(&s, a + b).unwrap();
        assert!(rel_err(&ab.samples, &direct.samples) < 1e-4);
        assert!(((ab.energy() - s.energy()) / s.energy()).abs() < 1e-5);
    }

    #[test]
    fn training_range_flag() {
        let s = generate_cwlfm(&ChirpParams::desk_scale()).unwrap();
        let max = 0.01 * s.duration_s();
        assert!(delay_in_training_range(&s, 0.0));
        assert!(delay_in_training_range(&s, max));
        assert!(!delay_in_training_range(&s, 1.5 * max));
    }
}
