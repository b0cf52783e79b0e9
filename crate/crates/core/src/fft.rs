//! Thin wrappers over `rustfft` with a per-thread planner cache.

use std::cell::RefCell;

use num_complex::Complex32;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f32>> = RefCell::new(FftPlanner::new());
}

/// In-place forward DFT (no scaling).
pub fn forward(buf: &mut [Complex32]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
}

/// In-place inverse DFT, scaled by 1/N so that `inverse(forward(x)) == x`.
pub fn inverse(buf: &mut [Complex32]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(buf));
    let scale = 1.0 / buf.len() as f32;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Signed frequency in Hz of DFT bin `k` for an `n`-point transform.
///
/// Bins above `n/2` map to negative frequencies; bin `n/2` (even `n`) is reported
/// as `+fs/2`.
pub fn bin_frequency(k: usize, n: usize, sample_rate_hz: f64) -> f64 {
    let signed = if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    };
    signed * sample_rate_hz / n as f64
}
