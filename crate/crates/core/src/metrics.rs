//! SIR sweeps (PSLR and RMS range error with and without the denoiser),
//! false-report counting and residual SINR.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::Denoiser;
use crate::channel::{grid_tones, FadingParams, QpskSpec};
use crate::dataset::{example_seed, random_tones, synthesize_pair, ExampleMeta};
use crate::error::{Error, Result};
use crate::rangeproc::{
    estimate_range_with, mean_pslr, stretch_process_windowed, PeakSearch, Window, PSLR_CAP_DB,
};
use crate::waveform::{generate_cwlfm, ChirpParams, IqSignal};
use crate::SPEED_OF_LIGHT_M_S;

pub const DEFAULT_FALSE_REPORT_GATE_M: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepInterference {
    Tones,
    Qpsk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSweepConfig {
    pub chirp: ChirpParams,
    pub sir_grid_db: Vec<f64>,
    pub interference: SweepInterference,
    pub num_tones: usize,
    /// Place tones on the fixed grid instead of drawing frequencies per trial.
    pub grid_tones: bool,
    /// QPSK occupied bandwidth as a fraction of the chirp bandwidth.
    pub qpsk_bandwidth_frac: f64,
    pub qpsk_rolloff: f64,
    pub num_trials: usize,
    pub snr_db: f64,
    pub fading_enabled: bool,
    pub fading: FadingParams,
    pub delay_frac_range: [f64; 2],
    pub false_report_gate_m: f64,
    pub peak_search: PeakSearch,
    pub window: Window,
    pub seed: u64,
}

impl Default for EvalSweepConfig {
    fn default() -> Self {
        Self {
            chirp: ChirpParams::desk_scale(),
            sir_grid_db: (0..=10).map(|i| -30.0 + 5.0 * i as f64).collect(),
            interference: SweepInterference::Tones,
            num_tones: 5,
            grid_tones: false,
            qpsk_bandwidth_frac: 1.0,
            qpsk_rolloff: 0.35,
            num_trials: 100,
            snr_db: 0.0,
            fading_enabled: true,
            fading: FadingParams::default(),
            delay_frac_range: [0.0, 0.01],
            false_report_gate_m: DEFAULT_FALSE_REPORT_GATE_M,
            peak_search: PeakSearch::default(),
            window: Window::Rectangular,
            seed: 0,
        }
    }
}

impl EvalSweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.chirp.validate()?;
        if self.sir_grid_db.is_empty() || self.sir_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config(
                "sir_grid_db must be a non-empty list of finite values".into(),
            ));
        }
        if self.num_trials == 0 {
            return Err(Error::Config("num_trials must be at least 1".into()));
        }
        self.fading.validate()?;
        if !self.snr_db.is_finite() {
            return Err(Error::Config("snr_db must be finite".into()));
        }
        let [lo, hi] = self.delay_frac_range;
        if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!(
                "delay_frac_range {:?} must be ordered and non-negative",
                self.delay_frac_range
            )));
        }
        if !(self.qpsk_bandwidth_frac > 0.0
            && self.qpsk_bandwidth_frac * self.chirp.bandwidth_hz <= self.chirp.sample_rate_hz)
        {
            return Err(Error::Config(format!(
                "qpsk_bandwidth_frac {} must be positive and keep the burst within fs",
                self.qpsk_bandwidth_frac
            )));
        }
        if self.false_report_gate_m.is_nan() || self.false_report_gate_m < 0.0 {
            return Err(Error::Config(
                "false_report_gate_m must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Scenario of trial `t` at SIR point `p`.
    pub fn trial(&self, p: usize, t: usize) -> ExampleMeta {
        let sir_db = self.sir_grid_db[p];
        let seed = example_seed(example_seed(self.seed, p as u64), t as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo_hi = self.delay_frac_range;
        let delay_frac = if lo_hi[0] == lo_hi[1] {
            lo_hi[0]
        } else {
            rng.random_range(lo_hi[0]..=lo_hi[1])
        };
        let b = self.chirp.bandwidth_hz;
        let (tones, qpsk) = match self.interference {
            SweepInterference::Tones => {
                let tones = if self.grid_tones {
                    grid_tones(self.num_tones, b, sir_db)
                } else {
                    random_tones(&mut rng, self.num_tones, b, |_| sir_db)
                };
                (tones, None)
            }
            SweepInterference::Qpsk => (
                Vec::new(),
                Some(QpskSpec {
                    bandwidth_hz: self.qpsk_bandwidth_frac * b,
                    center_hz: 0.0,
                    start_frac: 0.0,
                    duration_frac: 1.0,
                    sir_db,
                    rolloff: self.qpsk_rolloff,
                }),
            ),
        };
        ExampleMeta {
            index: t,
            seed,
            delay_s: delay_frac * self.chirp.duration_s(),
            delay_frac,
            snr_db: Some(self.snr_db),
            fading_seed: rng.random(),
            noise_seed: rng.random(),
            tones,
            qpsk,
            qpsk_seed: rng.random(),
        }
    }
}

/// Per-SIR aggregates. PSLR values are means of the up/down-peak PSLRs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub sir_db: f64,
    pub trials: usize,
    pub pslr_no_aec_db: f64,
    pub pslr_aec_db: f64,
    pub rmse_no_aec_m: f64,
    pub rmse_aec_m: f64,
    pub false_reports_no_aec: usize,
    pub false_reports_aec: usize,
    pub sinr_no_aec_db: f64,
    pub sinr_aec_db: f64,
    pub mse_no_aec: f64,
    pub mse_aec: f64,
}

pub const EVAL_CSV_HEADER: &str = "sir_db,trials,pslr_no_aec_db,pslr_aec_db,rmse_no_aec_m,rmse_aec_m,false_reports_no_aec,false_reports_aec,sinr_no_aec_db,sinr_aec_db,mse_no_aec,mse_aec";

/// Outcome of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialResult {
    pub true_range_m: f64,
    pub est_no_aec_m: f64,
    pub est_aec_m: f64,
    pub pslr_no_aec_db: f64,
    pub pslr_aec_db: f64,
    pub sinr_no_aec_db: f64,
    pub sinr_aec_db: f64,
    pub mse_no_aec: f64,
    pub mse_aec: f64,
}

fn mse(a: &IqSignal, b: &IqSignal) -> f64 {
    let s: f64 = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| (x - y).norm_sqr() as f64)
        .sum();
    // Per real element, matching the training loss.
    s / (2 * a.len()) as f64
}

/// Runs one scenario through both arms.
pub fn run_trial(
    model: &dyn Denoiser,
    cfg: &EvalSweepConfig,
    reference: &IqSignal,
    meta: &ExampleMeta,
) -> Result<TrialResult> {
    let pair = synthesize_pair(
        reference,
        &cfg.chirp,
        cfg.fading_enabled.then_some(&cfg.fading),
        true,
        meta,
    )?;
    let output = model.denoise(&pair.dirty)?;
    let arm = |sig: &IqSignal| -> Result<(f64, f64)> {
        let prof = stretch_process_windowed(sig, reference, &cfg.chirp, cfg.window)?;
        let est = estimate_range_with(&prof, &cfg.peak_search);
        Ok((est.range_m, mean_pslr(&prof, &est)))
    };
    let (est_no_aec_m, pslr_no_aec_db) = arm(&pair.dirty)?;
    let (est_aec_m, pslr_aec_db) = arm(&output)?;
    Ok(TrialResult {
        true_range_m: SPEED_OF_LIGHT_M_S * meta.delay_s / 2.0,
        est_no_aec_m,
        est_aec_m,
        pslr_no_aec_db,
        pslr_aec_db,
        sinr_no_aec_db: sinr_residual(&pair.dirty, &pair.clean)?,
        sinr_aec_db: sinr_residual(&output, &pair.clean)?,
        mse_no_aec: mse(&pair.dirty, &pair.clean),
        mse_aec: mse(&output, &pair.clean),
    })
}

fn rms(errors: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for e in errors {
        s += e * e;
        n += 1;
    }
    (s / n.max(1) as f64).sqrt()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    s / n.max(1) as f64
}

/// Aggregates trials of one SIR point.
pub fn aggregate(sir_db: f64, trials: &[TrialResult], gate_m: f64) -> EvalRow {
    let truths: Vec<f64> = trials.iter().map(|t| t.true_range_m).collect();
    let no: Vec<f64> = trials.iter().map(|t| t.est_no_aec_m).collect();
    let aec: Vec<f64> = trials.iter().map(|t| t.est_aec_m).collect();
    EvalRow {
        sir_db,
        trials: trials.len(),
        pslr_no_aec_db: mean(trials.iter().map(|t| t.pslr_no_aec_db)),
        pslr_aec_db: mean(trials.iter().map(|t| t.pslr_aec_db)),
        rmse_no_aec_m: rms(trials.iter().map(|t| t.est_no_aec_m - t.true_range_m)),
        rmse_aec_m: rms(trials.iter().map(|t| t.est_aec_m - t.true_range_m)),
        false_reports_no_aec: false_report_count(&no, &truths, gate_m).expect("equal lengths"),
        false_reports_aec: false_report_count(&aec, &truths, gate_m).expect("equal lengths"),
        sinr_no_aec_db: mean(trials.iter().map(|t| t.sinr_no_aec_db)),
        sinr_aec_db: mean(trials.iter().map(|t| t.sinr_aec_db)),
        mse_no_aec: mean(trials.iter().map(|t| t.mse_no_aec)),
        mse_aec: mean(trials.iter().map(|t| t.mse_aec)),
    }
}

/// Evaluates `model` at every SIR point. Trials run in parallel with their
/// own seeds; results are aggregated in trial order.
pub fn run_sweep(model: &dyn Denoiser, cfg: &EvalSweepConfig) -> Result<Vec<EvalRow>> {
    cfg.validate()?;
    if model.num_samples() != cfg.chirp.num_samples {
        return Err(Error::Config(format!(
            "model expects {} samples but the sweep chirp has {}",
            model.num_samples(),
            cfg.chirp.num_samples
        )));
    }
    let reference = generate_cwlfm(&cfg.chirp)?;
    (0..cfg.sir_grid_db.len())
        .map(|p| {
            let trials = (0..cfg.num_trials)
                .into_par_iter()
                .map(|t| run_trial(model, cfg, &reference, &cfg.trial(p, t)))
                .collect::<Result<Vec<_>>>()?;
            Ok(aggregate(
                cfg.sir_grid_db[p],
                &trials,
                cfg.false_report_gate_m,
            ))
        })
        .collect()
}

pub fn write_sweep_csv(rows: &[EvalRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "{EVAL_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.sir_db,
            r.trials,
            r.pslr_no_aec_db,
            r.pslr_aec_db,
            r.rmse_no_aec_m,
            r.rmse_aec_m,
            r.false_reports_no_aec,
            r.false_reports_aec,
            r.sinr_no_aec_db,
            r.sinr_aec_db,
            r.mse_no_aec,
            r.mse_aec
        )?;
    }
    Ok(())
}

/// Highest-to-lowest scan of the grid: the first SIR whose RMS error exceeds
/// `limit_m`, or `None` if no point does.
pub fn threshold_sir(rows: &[EvalRow], limit_m: f64, with_aec: bool) -> Option<f64> {
    let mut sorted: Vec<&EvalRow> = rows.iter().collect();
    sorted.sort_by(|a, b| b.sir_db.total_cmp(&a.sir_db));
    sorted
        .into_iter()
        .find(|r| {
            let e = if with_aec {
                r.rmse_aec_m
            } else {
                r.rmse_no_aec_m
            };
            e > limit_m
        })
        .map(|r| r.sir_db)
}

/// Number of estimates further than `gate_m` from their truth.
pub fn false_report_count(estimates: &[f64], truths: &[f64], gate_m: f64) -> Result<usize> {
    if estimates.len() != truths.len() {
        return Err(Error::Argument(format!(
            "{} estimates but {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    Ok(estimates
        .iter()
        .zip(truths)
        .filter(|(e, t)| (*e - *t).abs() > gate_m)
        .count())
}

/// `10 log10(|clean|^2 / |output / a - clean|^2)` where the complex gain
/// `a = <output, clean> / |clean|^2` is divided out first. Capped at
/// +/- [`PSLR_CAP_DB`].
pub fn sinr_residual(output: &IqSignal, clean: &IqSignal) -> Result<f64> {
    output.same_layout(clean)?;
    let energy = clean.energy();
    if energy == 0.0 {
        return Err(Error::Argument("clean signal has zero energy".into()));
    }
    let (mut re, mut im) = (0.0f64, 0.0f64);
    for (o, c) in output.samples.iter().zip(&clean.samples) {
        let p = o * c.conj();
        re += p.re as f64;
        im += p.im as f64;
    }
    let (ar, ai) = (re / energy, im / energy);
    let gain = ar * ar + ai * ai;
    if gain == 0.0 {
        return Ok(-PSLR_CAP_DB);
    }
    let residual: f64 = output
        .samples
        .iter()
        .zip(&clean.samples)
        .map(|(o, c)| {
            let (cr, ci) = (c.re as f64, c.im as f64);
            let dr = o.re as f64 - (ar * cr - ai * ci);
            let di = o.im as f64 - (ar * ci + ai * cr);
            dr * dr + di * di
        })
        .sum();
    if residual == 0.0 {
        return Ok(PSLR_CAP_DB);
    }
    Ok((10.0 * (gain * energy / residual).log10()).clamp(-PSLR_CAP_DB, PSLR_CAP_DB))
}

/// Short-time Fourier magnitudes of a signal, in dB relative to the strongest cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub window_len: usize,
    pub hop: usize,
    pub sample_rate_hz: f64,
    /// `frames[t][k]`, frequency bins in FFT order.
    pub frames: Vec<Vec<f64>>,
}

impl Spectrogram {
    pub fn frame_time_s(&self, t: usize) -> f64 {
        (t * self.hop) as f64 / self.sample_rate_hz
    }

    /// Long format, one row per cell, frequencies ascending from -fs/2.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "time_s,frequency_hz,magnitude_db")?;
        let n = self.window_len;
        for (t, frame) in self.frames.iter().enumerate() {
            let time = self.frame_time_s(t);
            for i in 0..n {
                // Shift so that the most negative frequency comes first.
                let k = (i + n / 2 + 1) % n;
                let f = crate::fft::bin_frequency(k, n, self.sample_rate_hz);
                writeln!(w, "{time},{f},{}", frame[k])?;
            }
        }
        Ok(())
    }
}

/// Hann-windowed STFT; frames that would run past the end are dropped.
pub fn spectrogram(sig: &IqSignal, window_len: usize, hop: usize) -> Result<Spectrogram> {
    if window_len < 2 || hop == 0 || window_len > sig.len() {
        return Err(Error::Argument(format!(
            "spectrogram needs 2 <= window_len <= {} and hop >= 1, got {window_len} and {hop}",
            sig.len()
        )));
    }
    let taper: Vec<f32> = (0..window_len)
        .map(|i| {
            let x = std::f64::consts::PI * i as f64 / (window_len - 1) as f64;
            x.sin().powi(2) as f32
        })
        .collect();
    let mut frames = Vec::new();
    let mut peak = 0.0f64;
    let mut start = 0;
    while start + window_len <= sig.len() {
        let mut buf: Vec<_> = sig.samples[start..start + window_len]
            .iter()
            .zip(&taper)
            .map(|(s, w)| s * w)
            .collect();
        crate::fft::forward(&mut buf);
        let power: Vec<f64> = buf.iter().map(|v| v.norm_sqr() as f64).collect();
        peak = power.iter().copied().fold(peak, f64::max);
        frames.push(power);
        start += hop;
    }
    for frame in &mut frames {
        for v in frame.iter_mut() {
            *v = if peak > 0.0 && *v > 0.0 {
                (10.0 * (*v / peak).log10()).max(crate::rangeproc::DB_FLOOR)
            } else {
                crate::rangeproc::DB_FLOOR
            };
        }
    }
    Ok(Spectrogram {
        window_len,
        hop,
        sample_rate_hz: sig.sample_rate_hz,
        frames,
    })
}
