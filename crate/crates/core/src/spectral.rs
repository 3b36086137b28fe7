//! Vibration frequency recovery from the per-frame event count.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};

pub const DEFAULT_CUTOFF_HZ: f64 = 25.0;
pub const DEFAULT_TOLERANCE_HZ: f64 = 1.0;
pub const TOP_K: usize = 3;

/// One-sided amplitude spectrum, normalized to a unit maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub sample_rate: f64,
    pub window_s: f64,
}

impl Spectrum {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frequency_hz,amplitude\n");
        for (f, a) in self.frequencies.iter().zip(&self.amplitudes) {
            s.push_str(&format!("{f},{a}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VibrationResult {
    pub detected_hz: f64,
    pub success: bool,
    /// Strongest components as (frequency, normalized amplitude), strongest first.
    pub top: Vec<(f64, f64)>,
    pub spectrum: Spectrum,
}

/// Raw amplitude spectrum |X_k| for k = 0..=n/2 (no window, no detrending).
pub fn amplitude_spectrum(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm()).collect()
}

/// Detects the dominant vibration in the first `window_s` seconds of `series`
/// sampled at `sample_rate`. Bins below `cutoff_hz` are discarded; ties go to
/// the lower frequency.
pub fn detect_vibration(
    series: &[f64],
    sample_rate: f64,
    window_s: f64,
    cutoff_hz: f64,
    target_hz: f64,
    tol_hz: f64,
) -> Result<VibrationResult> {
    if !(sample_rate > 0.0) || !(window_s > 0.0) {
        return invalid("sample rate and window must be positive");
    }
    let n = (window_s * sample_rate).round() as usize;
    if n < 2 || series.len() < n {
        return invalid(format!("series has {} samples, window needs {n}", series.len()));
    }
    let mut amps = amplitude_spectrum(&series[..n]);
    let df = sample_rate / n as f64;
    let frequencies: Vec<f64> = (0..amps.len()).map(|k| k as f64 * df).collect();
    for (a, f) in amps.iter_mut().zip(&frequencies) {
        if *f < cutoff_hz {
            *a = 0.0;
        }
    }
    let max = amps.iter().cloned().fold(0.0, f64::max);
    // relative floor so round-off of a constant series does not count as a peak
    let scale = series[..n].iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    if !(max > 1e-9 * scale) {
        return Err(Error::NoPeak);
    }
    for a in amps.iter_mut() {
        // quantized so that round-off cannot break exact ties
        *a = (*a / max * 1e12).round() / 1e12;
    }
    let mut order: Vec<usize> = (0..amps.len()).collect();
    // stable sort keeps lower frequencies first among equal amplitudes
    order.sort_by(|&a, &b| amps[b].total_cmp(&amps[a]));
    let top: Vec<(f64, f64)> = order.iter().take(TOP_K).map(|&k| (frequencies[k], amps[k])).collect();
    let detected_hz = top[0].0;
    Ok(VibrationResult {
        detected_hz,
        success: (detected_hz - target_hz).abs() <= tol_hz,
        top,
        spectrum: Spectrum { frequencies, amplitudes: amps, sample_rate, window_s },
    })
}

/// Splits `series` into contiguous non-overlapping windows and runs
/// [`detect_vibration`] on each. A trailing partial window is dropped.
pub fn detect_segments(
    series: &[f64],
    sample_rate: f64,
    window_s: f64,
    cutoff_hz: f64,
    target_hz: f64,
    tol_hz: f64,
) -> Result<Vec<Result<VibrationResult>>> {
    let n = (window_s * sample_rate).round() as usize;
    if n < 2 || series.len() < n {
        return invalid("series shorter than one window");
    }
    Ok(series
        .chunks_exact(n)
        .map(|c| detect_vibration(c, sample_rate, window_s, cutoff_hz, target_hz, tol_hz))
        .collect())
}
