//! Non-overlapping rectangular short-time Fourier transform.
//!
//! Window indices are 1-based throughout the public API: window `t` covers
//! samples `(t-1)M .. tM`. Only the bins `0..=M/2` are kept; the discarded
//! upper half is the complex conjugate of the kept one and is accounted for by
//! [`sym_coeff`].

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Result};

/// A real-valued, uniformly sampled signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    samples: Vec<f64>,
    /// Sampling rate in Hz. Carried as metadata only.
    pub sampling_rate: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        Self::with_rate(samples, 1.0)
    }

    pub fn with_rate(samples: Vec<f64>, sampling_rate: f64) -> Result<Self> {
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(domain(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sampling_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of whole windows of width `m`, or a shape error when `m` does not divide the length.
    pub fn windows(&self, m: usize) -> Result<usize> {
        check_window(m)?;
        if self.samples.is_empty() || self.samples.len() % m != 0 {
            return Err(shape(format!(
                "series length {} is not a positive multiple of the window size {m}",
                self.samples.len()
            )));
        }
        Ok(self.samples.len() / m)
    }
}

/// Number of retained frequency bins for window size `m`.
pub fn num_frequencies(m: usize) -> usize {
    m / 2 + 1
}

/// Multiplicity of bin `d` once the conjugate half of the spectrum is dropped.
///
/// The DC bin and (for even `m`) the Nyquist bin are their own conjugates and
/// count once; every other retained bin stands for itself and its mirror.
pub fn sym_coeff(d: usize, m: usize) -> u8 {
    if d == 0 || (m % 2 == 0 && d == m / 2) {
        1
    } else {
        2
    }
}

fn check_window(m: usize) -> Result<()> {
    if m < 2 {
        return Err(domain(format!("window size must be at least 2, got {m}")));
    }
    Ok(())
}

/// Table of `exp(-j 2 pi k / m)` for `k = 0..m`.
fn twiddles(m: usize) -> Vec<Complex64> {
    (0..m)
        .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / m as f64))
        .collect()
}

/// The `d`-th column of the `m`-point DFT matrix: element `n` is `exp(-j 2 pi d n / m)`.
pub fn dft_vector(m: usize, d: usize) -> Result<Vec<Complex64>> {
    check_window(m)?;
    if d >= m {
        return Err(domain(format!("frequency index {d} out of range for window size {m}")));
    }
    let tw = twiddles(m);
    Ok((0..m).map(|n| tw[(d * n) % m]).collect())
}

/// All `m` DFT bins of one window, before truncation to the retained half.
pub fn full_dft(window: &[f64]) -> Result<Vec<Complex64>> {
    let m = window.len();
    check_window(m)?;
    let tw = twiddles(m);
    Ok((0..m)
        .map(|d| {
            window
                .iter()
                .enumerate()
                .map(|(n, &x)| tw[(d * n) % m] * x)
                .sum()
        })
        .collect())
}

/// Complex spectra of every window, `T` rows by `D` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSequences {
    m: usize,
    t: usize,
    d: usize,
    data: Vec<Complex64>,
}

impl SpectralSequences {
    /// Builds from row-major `T x D` data.
    pub fn from_rows(m: usize, t: usize, data: Vec<Complex64>) -> Result<Self> {
        check_window(m)?;
        let d = num_frequencies(m);
        if data.len() != t * d {
            return Err(shape(format!("expected {t}x{d} spectra, got {} values", data.len())));
        }
        Ok(Self { m, t, d, data })
    }

    pub fn window_size(&self) -> usize {
        self.m
    }

    /// Number of windows `T`.
    pub fn windows(&self) -> usize {
        self.t
    }

    /// Number of retained bins `D`.
    pub fn frequencies(&self) -> usize {
        self.d
    }

    /// Spectrum of window `t` (1-based) at bin `d`.
    #[inline]
    pub fn at(&self, t: usize, d: usize) -> Complex64 {
        self.data[(t - 1) * self.d + d]
    }

    /// The spectral sequence of bin `d` in window order.
    pub fn column(&self, d: usize) -> Vec<Complex64> {
        (0..self.t).map(|t| self.data[t * self.d + d]).collect()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// `self + r * other`, used to move along a line in data space.
    pub fn axpy(&self, r: f64, other: &SpectralSequences) -> SpectralSequences {
        debug_assert_eq!(self.data.len(), other.data.len());
        SpectralSequences {
            m: self.m,
            t: self.t,
            d: self.d,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b * r).collect(),
        }
    }
}

/// Windowed DFT with a rectangular, non-overlapping window of width `m`.
pub fn stft(x: &TimeSeries, m: usize) -> Result<SpectralSequences> {
    let t = x.windows(m)?;
    Ok(stft_raw(x.samples(), m, t))
}

/// Same as [`stft`] on a bare slice whose length is already known to be `m * t`.
pub(crate) fn stft_raw(x: &[f64], m: usize, t: usize) -> SpectralSequences {
    let d = num_frequencies(m);
    let tw = twiddles(m);
    let mut data = Vec::with_capacity(t * d);
    for win in x.chunks_exact(m) {
        for bin in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, &v) in win.iter().enumerate() {
                acc += tw[(bin * n) % m] * v;
            }
            data.push(acc);
        }
    }
    SpectralSequences { m, t, d, data }
}

/// Mean of the spectra of bin `d` over windows `s..=e` (1-based).
pub fn segment_mean(f: &SpectralSequences, d: usize, s: usize, e: usize) -> Result<Complex64> {
    check_segment(f, d, s, e)?;
    let sum: Complex64 = (s..=e).map(|t| f.at(t, d)).sum();
    Ok(sum / (e - s + 1) as f64)
}

pub(crate) fn check_segment(f: &SpectralSequences, d: usize, s: usize, e: usize) -> Result<()> {
    if d >= f.frequencies() {
        return Err(domain(format!("frequency {d} out of range (D = {})", f.frequencies())));
    }
    if s == 0 || s > e || e > f.windows() {
        return Err(domain(format!(
            "invalid segment {s}..={e} for {} windows",
            f.windows()
        )));
    }
    Ok(())
}
