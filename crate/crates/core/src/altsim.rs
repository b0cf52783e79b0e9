//! Landing-approach simulation: a descending altitude profile sampled once per
//! record, echo synthesis with optional clutter and interference, and range
//! tracking with and without the denoiser.

use std::io::Write;

use num_complex::Complex32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::Denoiser;
use crate::channel::{apply_amplitude_fading, grid_tones, FadingParams, QpskSpec};
use crate::dataset::{corrupt, example_seed, ExampleMeta};
use crate::error::{Error, Result};
use crate::metrics::{false_report_count, DEFAULT_FALSE_REPORT_GATE_M};
use crate::rangeproc::{
    estimate_range_with, mean_pslr, stretch_process_windowed, PeakSearch, Window,
};
use crate::waveform::{apply_delay, generate_cwlfm, ChirpParams, IqSignal};
use crate::SPEED_OF_LIGHT_M_S;

/// Altitude as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AltitudeProfile {
    /// Straight line from `start_m` at t = 0 to `end_m` at the end of the run.
    Linear { start_m: f64, end_m: f64 },
    /// `(time_s, altitude_m)` breakpoints, linearly interpolated and held
    /// constant outside their span.
    Piecewise { points: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Trajectory {
    pub duration_s: f64,
    pub record_interval_s: f64,
    pub profile: AltitudeProfile,
}

impl Default for Trajectory {
    fn default() -> Self {
        Self {
            duration_s: 175.0,
            record_interval_s: 0.5,
            profile: AltitudeProfile::Linear {
                start_m: 2000.0,
                end_m: 0.0,
            },
        }
    }
}

/// Largest range whose delay stays within `0.01 T`: `c (0.01 T) / 2`.
pub fn max_unambiguous_range_m(chirp: &ChirpParams) -> f64 {
    SPEED_OF_LIGHT_M_S * chirp.max_delay_s() / 2.0
}

impl Trajectory {
    /// Default timing with the descent rescaled to start at the largest range
    /// the chirp can represent (50 m for a 1000-sample record).
    pub fn scaled_to(chirp: &ChirpParams) -> Self {
        Self {
            profile: AltitudeProfile::Linear {
                start_m: max_unambiguous_range_m(chirp),
                end_m: 0.0,
            },
            ..Self::default()
        }
    }

    pub fn num_records(&self) -> usize {
        (self.duration_s / self.record_interval_s + 1e-9).floor() as usize + 1
    }

    pub fn record_time_s(&self, i: usize) -> f64 {
        i as f64 * self.record_interval_s
    }

    pub fn altitude_m(&self, t: f64) -> f64 {
        match &self.profile {
            AltitudeProfile::Linear { start_m, end_m } => {
                let f = if self.duration_s > 0.0 {
                    (t / self.duration_s).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                start_m + (end_m - start_m) * f
            }
            AltitudeProfile::Piecewise { points } => {
                let first = points[0];
                if t <= first[0] {
                    return first[1];
                }
                for w in points.windows(2) {
                    let ([t0, a0], [t1, a1]) = (w[0], w[1]);
                    if t <= t1 {
                        let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
                        return a0 + (a1 - a0) * f;
                    }
                }
                points[points.len() - 1][1]
            }
        }
    }

    pub fn validate(&self, max_range_m: f64) -> Result<()> {
        if !(self.duration_s >= 0.0 && self.record_interval_s > 0.0 && self.duration_s.is_finite())
        {
            return Err(Error::Config(format!(
                "trajectory needs duration >= 0 and interval > 0, got {} s / {} s",
                self.duration_s, self.record_interval_s
            )));
        }
        if let AltitudeProfile::Piecewise { points } = &self.profile {
            if points.is_empty() || points.windows(2).any(|w| w[1][0] < w[0][0]) {
                return Err(Error::Config(
                    "piecewise profile needs at least one point with non-decreasing times".into(),
                ));
            }
        }
        for i in 0..self.num_records() {
            let t = self.record_time_s(i);
            let a = self.altitude_m(t);
            if a.is_nan() || a < 0.0 {
                return Err(Error::Config(format!(
                    "altitude {a} m at t = {t} s is negative"
                )));
            }
            if a > max_range_m + 1e-9 {
                return Err(Error::Config(format!(
                    "altitude {a} m at t = {t} s exceeds the maximum unambiguous range of {max_range_m} m (c * 0.01 T / 2)"
                )));
            }
        }
        Ok(())
    }
}

/// Tones on a fixed evenly spaced grid across the chirp band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimTones {
    pub enabled: bool,
    pub count: usize,
    pub sir_db: f64,
}

impl Default for SimTones {
    fn default() -> Self {
        Self {
            enabled: true,
            count: 5,
            sir_db: -20.0,
        }
    }
}

/// A centred QPSK burst covering the whole record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimQpsk {
    pub enabled: bool,
    pub sir_db: f64,
    /// Occupied bandwidth as a fraction of the chirp bandwidth.
    pub bandwidth_frac: f64,
    pub rolloff: f64,
}

impl Default for SimQpsk {
    fn default() -> Self {
        Self {
            enabled: true,
            sir_db: -20.0,
            bandwidth_frac: 1.0,
            rolloff: 0.35,
        }
    }
}

/// Weak point scatterers behind the main echo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Clutter {
    pub enabled: bool,
    pub count: usize,
    /// Extra delays are uniform in `[0, max_extra_delay_frac * T]`.
    pub max_extra_delay_frac: f64,
    /// Power of each scatterer relative to the main echo.
    pub relative_power_db: f64,
}

impl Default for Clutter {
    fn default() -> Self {
        Self {
            enabled: false,
            count: 3,
            max_extra_delay_frac: 0.002,
            relative_power_db: -20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub trajectory: Trajectory,
    pub chirp: ChirpParams,
    pub noise_enabled: bool,
    pub snr_db: f64,
    pub fading_enabled: bool,
    pub fading: FadingParams,
    pub tones: SimTones,
    pub qpsk: SimQpsk,
    pub clutter: Clutter,
    pub false_report_gate_m: f64,
    pub peak_search: PeakSearch,
    pub window: Window,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let chirp = ChirpParams::desk_scale();
        Self {
            trajectory: Trajectory::scaled_to(&chirp),
            chirp,
            noise_enabled: true,
            snr_db: 0.0,
            fading_enabled: true,
            fading: FadingParams::default(),
            tones: SimTones::default(),
            qpsk: SimQpsk::default(),
            clutter: Clutter::default(),
            false_report_gate_m: DEFAULT_FALSE_REPORT_GATE_M,
            peak_search: PeakSearch::default(),
            window: Window::Rectangular,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// The same scenario with noise, fading, interference and clutter off.
    pub fn without_corruption(&self) -> Self {
        let mut c = self.clone();
        c.noise_enabled = false;
        c.fading_enabled = false;
        c.tones.enabled = false;
        c.qpsk.enabled = false;
        c.clutter.enabled = false;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.chirp.validate()?;
        self.trajectory
            .validate(max_unambiguous_range_m(&self.chirp))?;
        self.fading.validate()?;
        if !self.snr_db.is_finite() {
            return Err(Error::Config("snr_db must be finite".into()));
        }
        self.qpsk_spec(&self.qpsk)
            .validate(self.chirp.sample_rate_hz)
            .map_err(|e| Error::Config(e.to_string()))?;
        let c = &self.clutter;
        if !(c.max_extra_delay_frac >= 0.0 && c.relative_power_db.is_finite()) {
            return Err(Error::Config(format!("invalid clutter settings {c:?}")));
        }
        if !self.tones.sir_db.is_finite() {
            return Err(Error::Config("tones.sir_db must be finite".into()));
        }
        if self.false_report_gate_m.is_nan() || self.false_report_gate_m < 0.0 {
            return Err(Error::Config(
                "false_report_gate_m must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn qpsk_spec(&self, q: &SimQpsk) -> QpskSpec {
        QpskSpec {
            bandwidth_hz: q.bandwidth_frac * self.chirp.bandwidth_hz,
            center_hz: 0.0,
            start_frac: 0.0,
            duration_frac: 1.0,
            sir_db: q.sir_db,
            rolloff: q.rolloff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub time_s: f64,
    pub true_range_m: f64,
    pub est_no_aec_m: f64,
    pub est_aec_m: f64,
    pub pslr_no_aec_db: f64,
    pub pslr_aec_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub records: usize,
    pub range_bin_m: f64,
    pub gate_m: f64,
    pub rmse_no_aec_m: f64,
    pub rmse_aec_m: f64,
    pub false_reports_no_aec: usize,
    pub false_reports_aec: usize,
    /// Records whose estimate is within one range bin of truth.
    pub within_bin_no_aec: usize,
    pub within_bin_aec: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub rows: Vec<SimRow>,
    pub summary: SimSummary,
}

pub const SIM_CSV_HEADER: &str =
    "time_s,true_range_m,est_no_aec_m,est_aec_m,pslr_no_aec_db,pslr_aec_db";

impl SimResult {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{SIM_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.time_s,
                r.true_range_m,
                r.est_no_aec_m,
                r.est_aec_m,
                r.pslr_no_aec_db,
                r.pslr_aec_db
            )?;
        }
        Ok(())
    }

    /// Summary as pretty-printed JSON.
    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }
}

/// The received record (before the denoiser) for record `i`, plus its true
/// delay.
pub fn synthesize_record(
    cfg: &SimConfig,
    reference: &IqSignal,
    i: usize,
) -> Result<(IqSignal, f64)> {
    let altitude = cfg.trajectory.altitude_m(cfg.trajectory.record_time_s(i));
    let delay_s = 2.0 * altitude / SPEED_OF_LIGHT_M_S;
    debug_assert_eq!(delay_s, 2.0 * altitude / SPEED_OF_LIGHT_M_S);
    let mut rng = ChaCha8Rng::seed_from_u64(example_seed(cfg.seed, i as u64));

    let mut echo = apply_delay(reference, delay_s)?;
    let c = &cfg.clutter;
    if c.enabled {
        let amp = 10f64.powf(c.relative_power_db / 20.0);
        for _ in 0..c.count {
            let extra = rng.random_range(0.0..=c.max_extra_delay_frac) * cfg.chirp.duration_s();
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let g = Complex32::from_polar(amp as f32, phase as f32);
            let scatter = apply_delay(reference, delay_s + extra)?;
            for (e, s) in echo.samples.iter_mut().zip(&scatter.samples) {
                *e += g * s;
            }
        }
    }
    let fading_seed = rng.random();
    if cfg.fading_enabled {
        echo = apply_amplitude_fading(&echo, &cfg.fading, cfg.chirp.bandwidth_hz, fading_seed)?;
    }
    let meta = ExampleMeta {
        index: i,
        seed: cfg.seed,
        delay_s,
        delay_frac: delay_s / cfg.chirp.duration_s(),
        snr_db: cfg.noise_enabled.then_some(cfg.snr_db),
        fading_seed,
        noise_seed: rng.random(),
        tones: if cfg.tones.enabled {
            grid_tones(cfg.tones.count, cfg.chirp.bandwidth_hz, cfg.tones.sir_db)
        } else {
            Vec::new()
        },
        qpsk: cfg.qpsk.enabled.then(|| cfg.qpsk_spec(&cfg.qpsk)),
        qpsk_seed: rng.random(),
    };
    Ok((corrupt(&echo, echo.power(), &meta)?, delay_s))
}

/// Runs the whole trajectory. Records are independent and may run in
/// parallel; rows come out in time order.
pub fn run_landing_sim(model: &dyn Denoiser, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    if model.num_samples() != cfg.chirp.num_samples {
        return Err(Error::Config(format!(
            "model expects {} samples but the simulation chirp has {}",
            model.num_samples(),
            cfg.chirp.num_samples
        )));
    }
    let reference = generate_cwlfm(&cfg.chirp)?;
    let rows = (0..cfg.trajectory.num_records())
        .into_par_iter()
        .map(|i| {
            let (dirty, delay_s) = synthesize_record(cfg, &reference, i)?;
            let output = model.denoise(&dirty)?;
            let arm = |sig: &IqSignal| -> Result<(f64, f64)> {
                let prof = stretch_process_windowed(sig, &reference, &cfg.chirp, cfg.window)?;
                let est = estimate_range_with(&prof, &cfg.peak_search);
                Ok((est.range_m, mean_pslr(&prof, &est)))
            };
            let (est_no_aec_m, pslr_no_aec_db) = arm(&dirty)?;
            let (est_aec_m, pslr_aec_db) = arm(&output)?;
            Ok(SimRow {
                time_s: cfg.trajectory.record_time_s(i),
                true_range_m: SPEED_OF_LIGHT_M_S * delay_s / 2.0,
                est_no_aec_m,
                est_aec_m,
                pslr_no_aec_db,
                pslr_aec_db,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let truths: Vec<f64> = rows.iter().map(|r| r.true_range_m).collect();
    let no: Vec<f64> = rows.iter().map(|r| r.est_no_aec_m).collect();
    let aec: Vec<f64> = rows.iter().map(|r| r.est_aec_m).collect();
    let rmse = |est: &[f64]| {
        (est.iter()
            .zip(&truths)
            .map(|(e, t)| (e - t).powi(2))
            .sum::<f64>()
            / est.len() as f64)
            .sqrt()
    };
    let bin = SPEED_OF_LIGHT_M_S * cfg.chirp.sample_rate_hz
        / (cfg.chirp.num_samples as f64 * 2.0 * cfg.chirp.slope_hz_per_s());
    let within = |est: &[f64]| {
        est.iter()
            .zip(&truths)
            .filter(|(e, t)| (*e - *t).abs() < bin)
            .count()
    };
    let summary = SimSummary {
        records: rows.len(),
        range_bin_m: bin,
        gate_m: cfg.false_report_gate_m,
        rmse_no_aec_m: rmse(&no),
        rmse_aec_m: rmse(&aec),
        false_reports_no_aec: false_report_count(&no, &truths, cfg.false_report_gate_m)?,
        false_reports_aec: false_report_count(&aec, &truths, cfg.false_report_gate_m)?,
        within_bin_no_aec: within(&no),
        within_bin_aec: within(&aec),
    };
    Ok(SimResult { rows, summary })
}
