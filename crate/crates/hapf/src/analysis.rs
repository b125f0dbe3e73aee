//! Harmonic spectrum, THD, and compliance measurements.
//!
//! The spectrum is a rectangular-window DFT evaluated only at integer
//! multiples of the fundamental. Over a window covering an exact integer
//! number of fundamental cycles this is leakage-free: any signal composed of
//! integer harmonics is recovered bin-exact.

use std::f64::consts::PI;

use thiserror::Error;

/// Default THD ceiling applied by the compliance verdict.
pub const IEEE519_THD_LIMIT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("window misalignment: {0}")]
    WindowMisalignment(String),
    #[error("zero fundamental magnitude, THD undefined")]
    ZeroFundamental,
    #[error("harmonic {h_max} of {f1} Hz lies beyond the Nyquist limit of samples at dt = {dt} s")]
    BeyondNyquist { h_max: usize, f1: f64, dt: f64 },
}

/// Harmonic magnitudes and phases of one channel, orders `0..=h_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Fundamental frequency in hertz.
    pub f1: f64,
    /// Peak magnitude per harmonic order (index = order, 0 is the DC term).
    pub magnitudes: Vec<f64>,
    /// Phase per harmonic order, radians.
    pub phases: Vec<f64>,
    /// Harmonic distortion over orders `2..=h_max`, fraction of fundamental.
    /// Zero when the fundamental is zero; [`thd`] errors in that case.
    pub thd: f64,
}

impl Spectrum {
    pub fn h_max(&self) -> usize {
        self.magnitudes.len() - 1
    }
}

/// Rectangular-window DFT at harmonic bins of `f1`.
///
/// The sample window must span exactly `n_cycles` fundamental periods and
/// `n_cycles` must be at least 5, otherwise a window-misalignment error is
/// returned.
pub fn dft_spectrum(
    samples: &[f64],
    dt: f64,
    f1: f64,
    n_cycles: usize,
    h_max: usize,
) -> Result<Spectrum, AnalysisError> {
    if n_cycles < 5 {
        return Err(AnalysisError::WindowMisalignment(format!(
            "need at least 5 fundamental cycles, got {n_cycles}"
        )));
    }
    let expected = n_cycles as f64 / (f1 * dt);
    let rounded = expected.round();
    if (expected - rounded).abs() > 1e-6 {
        return Err(AnalysisError::WindowMisalignment(format!(
            "{n_cycles} cycles at f1 = {f1} Hz is {expected} samples at dt = {dt}, not integral"
        )));
    }
    let n = samples.len();
    if n as f64 != rounded {
        return Err(AnalysisError::WindowMisalignment(format!(
            "window holds {n} samples, expected {rounded} for {n_cycles} cycles"
        )));
    }
    // Bins above Nyquist alias onto their mirror images and would
    // double-count energy in the THD.
    if h_max as f64 * f1 > 0.5 / dt {
        return Err(AnalysisError::BeyondNyquist { h_max, f1, dt });
    }

    let mut magnitudes = Vec::with_capacity(h_max + 1);
    let mut phases = Vec::with_capacity(h_max + 1);
    for h in 0..=h_max {
        // Harmonic h falls on DFT bin h * n_cycles. The phase index is
        // reduced mod n in integer arithmetic so it stays exact over long
        // windows.
        let k = (h * n_cycles) as u64;
        let n_u = n as u64;
        let mut re = 0.0;
        let mut im = 0.0;
        for (t, &x) in samples.iter().enumerate() {
            let idx = (k * t as u64) % n_u;
            let angle = -2.0 * PI * idx as f64 / n as f64;
            re += x * angle.cos();
            im += x * angle.sin();
        }
        let scale = if h == 0 { 1.0 } else { 2.0 };
        magnitudes.push(scale * (re * re + im * im).sqrt() / n as f64);
        phases.push(im.atan2(re));
    }

    let thd = if magnitudes[1] > 0.0 {
        harmonic_ratio(&magnitudes)
    } else {
        0.0
    };
    Ok(Spectrum {
        f1,
        magnitudes,
        phases,
        thd,
    })
}

fn harmonic_ratio(magnitudes: &[f64]) -> f64 {
    let sum_sq: f64 = magnitudes[2..].iter().map(|m| m * m).sum();
    sum_sq.sqrt() / magnitudes[1]
}

/// Total harmonic distortion of a spectrum, as a fraction of the fundamental.
pub fn thd(spec: &Spectrum) -> Result<f64, AnalysisError> {
    if spec.magnitudes[1] <= 0.0 {
        return Err(AnalysisError::ZeroFundamental);
    }
    Ok(harmonic_ratio(&spec.magnitudes))
}

/// Root mean square of a sample buffer.
pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64).sqrt()
}

/// Residual of Parseval's identity between the time series and its spectrum:
/// `|rms^2 - (mag0^2 + sum(mag_h^2) / 2)|`. Near zero for signals made of
/// integer harmonics covered by the spectrum.
pub fn parseval_check(samples: &[f64], spec: &Spectrum) -> f64 {
    let mean_sq = rms(samples).powi(2);
    let spectral: f64 =
        spec.magnitudes[0].powi(2) + spec.magnitudes[1..].iter().map(|m| m * m).sum::<f64>() / 2.0;
    (mean_sq - spectral).abs()
}

/// One line of the compliance report.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicRow {
    pub order: usize,
    /// Magnitude relative to the fundamental.
    pub relative: f64,
}

/// THD compliance verdict plus the per-harmonic table behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Ieee519Report {
    pub pass: bool,
    pub thd: f64,
    pub thd_limit: f64,
    pub rows: Vec<HarmonicRow>,
}

/// Pass iff `thd < thd_limit`, strictly.
pub fn ieee519_verdict(spec: &Spectrum, thd_limit: f64) -> Result<Ieee519Report, AnalysisError> {
    let thd = thd(spec)?;
    let fundamental = spec.magnitudes[1];
    let rows = spec
        .magnitudes
        .iter()
        .enumerate()
        .skip(2)
        .map(|(order, m)| HarmonicRow {
            order,
            relative: m / fundamental,
        })
        .collect();
    Ok(Ieee519Report {
        pass: thd < thd_limit,
        thd,
        thd_limit,
        rows,
    })
}
