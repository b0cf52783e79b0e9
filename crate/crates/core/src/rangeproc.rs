//! Stretch processing, range profiles and two-peak range estimation.
//!
//! The received record is mixed against the zero-delay reference as
//! `reference * conj(received)`. With this order a delay `tau` beats at
//! `+k tau` during the upsweep and `-k tau` during the downsweep, so one FFT
//! over the whole record shows one peak in each half of the spectrum.

use std::io::Write;

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::waveform::{ChirpParams, IqSignal};
use crate::SPEED_OF_LIGHT_M_S;

/// dB value used for exactly-zero bins.
pub const DB_FLOOR: f64 = -300.0;
/// Stand-in for an infinite peak-to-sidelobe ratio.
pub const PSLR_CAP_DB: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

/// Magnitude spectrum of a stretch-processed record, in dB relative to its
/// strongest bin.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeProfile {
    pub magnitudes_db: Vec<f64>,
    pub sample_rate_hz: f64,
    pub chirp_slope_hz_per_s: f64,
}

impl RangeProfile {
    pub fn num_bins(&self) -> usize {
        self.magnitudes_db.len()
    }

    /// Signed beat frequency of `bin`.
    pub fn bin_freq_hz(&self, bin: usize) -> f64 {
        fft::bin_frequency(bin, self.num_bins(), self.sample_rate_hz)
    }

    /// `c f / (2 k)` for the bin's signed frequency.
    pub fn bin_range_m(&self, bin: usize) -> f64 {
        SPEED_OF_LIGHT_M_S * self.bin_freq_hz(bin) / (2.0 * self.chirp_slope_hz_per_s)
    }

    /// Range spanned by one bin.
    pub fn range_resolution_m(&self) -> f64 {
        SPEED_OF_LIGHT_M_S * self.sample_rate_hz
            / (self.num_bins() as f64 * 2.0 * self.chirp_slope_hz_per_s)
    }

    /// Writes `bin,frequency_hz,range_m,magnitude_db` rows. `range_m` is signed:
    /// negative-frequency bins report the negated downsweep range.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "bin,frequency_hz,range_m,magnitude_db")?;
        for (b, m) in self.magnitudes_db.iter().enumerate() {
            writeln!(w, "{b},{},{},{m}", self.bin_freq_hz(b), self.bin_range_m(b))?;
        }
        Ok(())
    }
}

/// Stretch processing with a rectangular window.
pub fn stretch_process(
    received: &IqSignal,
    reference: &IqSignal,
    params: &ChirpParams,
) -> Result<RangeProfile> {
    stretch_process_windowed(received, reference, params, Window::Rectangular)
}

pub fn stretch_process_windowed(
    received: &IqSignal,
    reference: &IqSignal,
    params: &ChirpParams,
    window: Window,
) -> Result<RangeProfile> {
    received.same_layout(reference)?;
    if received.len() != params.num_samples || received.sample_rate_hz != params.sample_rate_hz {
        return Err(Error::Dimension(format!(
            "record has {} samples at {} Hz; chirp is {} samples at {} Hz",
            received.len(),
            received.sample_rate_hz,
            params.num_samples,
            params.sample_rate_hz
        )));
    }
    let n = received.len();
    let mut x: Vec<Complex32> = reference
        .samples
        .iter()
        .zip(&received.samples)
        .map(|(r, s)| r * s.conj())
        .collect();
    if window == Window::Hann {
        for (i, v) in x.iter_mut().enumerate() {
            let w = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos();
            *v *= w as f32;
        }
    }
    fft::forward(&mut x);
    let mags: Vec<f64> = x.iter().map(|v| v.norm() as f64).collect();
    let peak = mags.iter().cloned().fold(0.0, f64::max);
    let magnitudes_db = mags
        .iter()
        .map(|&m| {
            if m > 0.0 && peak > 0.0 {
                (20.0 * (m / peak).log10()).max(DB_FLOOR)
            } else {
                DB_FLOOR
            }
        })
        .collect();
    Ok(RangeProfile {
        magnitudes_db,
        sample_rate_hz: params.sample_rate_hz,
        chirp_slope_hz_per_s: params.slope_hz_per_s(),
    })
}

/// Peak-search options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeakSearch {
    /// Bins `|b| <= g` around DC are skipped when set. Off by default, which
    /// lets a zero-range echo be found at DC.
    pub dc_guard_bins: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeEstimate {
    /// Mean of the upsweep and downsweep ranges.
    pub range_m: f64,
    pub up_range_m: f64,
    pub down_range_m: f64,
    pub up_peak_bin: usize,
    pub down_peak_bin: usize,
    pub up_peak_db: f64,
    pub down_peak_db: f64,
}

/// Bins of the positive half in ascending frequency: `0 .. N/2`.
fn positive_half(n: usize) -> impl Iterator<Item = usize> + Clone {
    0..n / 2
}

/// Bins of the negative half in ascending frequency, ending at DC.
fn negative_half(n: usize) -> impl Iterator<Item = usize> + Clone {
    (n / 2..n).chain(std::iter::once(0))
}

fn argmax(mags: &[f64], bins: impl Iterator<Item = usize>) -> usize {
    let mut best: Option<usize> = None;
    for b in bins {
        if best.is_none_or(|p| mags[b] > mags[p]) {
            best = Some(b);
        }
    }
    best.unwrap_or(0)
}

/// Two-peak range estimate with default options.
pub fn estimate_range(profile: &RangeProfile) -> RangeEstimate {
    estimate_range_with(profile, &PeakSearch::default())
}

pub fn estimate_range_with(profile: &RangeProfile, search: &PeakSearch) -> RangeEstimate {
    let n = profile.num_bins();
    let mags = &profile.magnitudes_db;
    let keep = |b: &usize| match search.dc_guard_bins {
        Some(g) => {
            let d = (*b).min(n - *b);
            d > g
        }
        None => true,
    };
    let up = argmax(mags, positive_half(n).filter(keep));
    let down = argmax(mags, negative_half(n).filter(keep));
    let up_range_m = profile.bin_range_m(up);
    let down_range_m = -profile.bin_range_m(down);
    RangeEstimate {
        range_m: 0.5 * (up_range_m + down_range_m),
        up_range_m,
        down_range_m,
        up_peak_bin: up,
        down_peak_bin: down,
        up_peak_db: mags[up],
        down_peak_db: mags[down],
    }
}

/// Peak-to-sidelobe ratio in dB around `peak_bin`.
///
/// Only the half-spectrum containing the peak is considered (bin 0 belongs to
/// both). The main lobe extends from the peak to the first local minimum on
/// each side; the PSLR is the peak level minus the largest level outside it,
/// capped at [`PSLR_CAP_DB`].
pub fn pslr(profile: &RangeProfile, peak_bin: usize) -> f64 {
    let n = profile.num_bins();
    let bins: Vec<usize> = if peak_bin < n / 2 {
        positive_half(n).collect()
    } else {
        negative_half(n).collect()
    };
    let mags: Vec<f64> = bins.iter().map(|&b| profile.magnitudes_db[b]).collect();
    let Some(p) = bins.iter().position(|&b| b == peak_bin) else {
        return PSLR_CAP_DB;
    };
    let mut lo = p;
    while lo > 0 && mags[lo - 1] < mags[lo] {
        lo -= 1;
    }
    let mut hi = p;
    while hi + 1 < mags.len() && mags[hi + 1] < mags[hi] {
        hi += 1;
    }
    let side = mags[..lo]
        .iter()
        .chain(&mags[hi + 1..])
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    (mags[p] - side).min(PSLR_CAP_DB)
}

/// Mean of the PSLRs at both estimated peaks.
pub fn mean_pslr(profile: &RangeProfile, est: &RangeEstimate) -> f64 {
    0.5 * (pslr(profile, est.up_peak_bin) + pslr(profile, est.down_peak_bin))
}
