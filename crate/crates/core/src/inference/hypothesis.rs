//! Hypotheses about one detected location, the test statistic and the line through the data.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Error, Result};
use crate::objective::CpConfiguration;
use crate::spectral::{stft, sym_coeff, SpectralSequences, TimeSeries};

/// Neighbourhood of the tested location on one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyContext {
    pub d: usize,
    /// Previous change point on this frequency, or 0.
    pub pre: usize,
    /// Next change point on this frequency, or `T`.
    pub suc: usize,
    /// Length correction `(suc - τ)(τ - pre) / (suc - pre)`.
    pub a_len: f64,
    pub csym: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisContext {
    pub tau: usize,
    pub window_size: usize,
    pub windows: usize,
    pub frequencies: Vec<FrequencyContext>,
    pub df: f64,
}

impl HypothesisContext {
    pub fn frequency_set(&self) -> Vec<usize> {
        self.frequencies.iter().map(|f| f.d).collect()
    }
}

/// Builds the hypothesis for the union location `tau` of `cfg` with windows of `m` samples.
pub fn build_hypothesis(cfg: &CpConfiguration, tau: usize, m: usize) -> Result<HypothesisContext> {
    if crate::spectral::num_frequencies(m) != cfg.frequencies() {
        return Err(shape(format!("window size {m} does not match {} frequencies", cfg.frequencies())));
    }
    let t = cfg.windows();
    let mut frequencies = Vec::new();
    for d in 0..cfg.frequencies() {
        let set = cfg.change_points(d);
        let Ok(i) = set.binary_search(&tau) else { continue };
        let pre = if i == 0 { 0 } else { set[i - 1] };
        let suc = set.get(i + 1).copied().unwrap_or(t);
        let a_len = ((suc - tau) * (tau - pre)) as f64 / (suc - pre) as f64;
        frequencies.push(FrequencyContext { d, pre, suc, a_len, csym: sym_coeff(d, m) });
    }
    if frequencies.is_empty() {
        return Err(domain(format!("location {tau} is not a detected change point")));
    }
    let df = frequencies.iter().map(|f| f.csym as f64).sum();
    Ok(HypothesisContext { tau, window_size: m, windows: t, frequencies, df })
}

/// Difference of segment-mean spectra across `τ`, one entry per tested frequency.
pub fn mean_differences(f: &SpectralSequences, ctx: &HypothesisContext) -> Vec<Complex64> {
    let mean = |d: usize, s: usize, e: usize| (s..=e).map(|t| f.at(t, d)).sum::<Complex64>() / (e - s + 1) as f64;
    ctx.frequencies
        .iter()
        .map(|fc| mean(fc.d, fc.pre + 1, ctx.tau) - mean(fc.d, ctx.tau + 1, fc.suc))
        .collect()
}

fn check_series(x: &[f64], ctx: &HypothesisContext) -> Result<()> {
    if x.len() != ctx.window_size * ctx.windows {
        return Err(shape(format!(
            "series has {} samples but the hypothesis expects {}",
            x.len(),
            ctx.window_size * ctx.windows
        )));
    }
    Ok(())
}

/// `‖P x‖²` from the mean differences.
fn projected_norm_sq(deltas: &[Complex64], ctx: &HypothesisContext) -> f64 {
    let m = ctx.window_size as f64;
    ctx.frequencies
        .iter()
        .zip(deltas)
        .map(|(fc, dl)| fc.a_len * fc.csym as f64 / m * dl.norm_sqr())
        .sum()
}

/// `σ⁻¹ ‖P x‖`.
pub fn test_statistic(x: &TimeSeries, ctx: &HypothesisContext, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(domain(format!("sigma must be positive, got {sigma}")));
    }
    check_series(x.samples(), ctx)?;
    let f = stft(x, ctx.window_size)?;
    Ok(projected_norm_sq(&mean_differences(&f, ctx), ctx).sqrt() / sigma)
}

/// Applies the projection to a raw series.
pub fn project(x: &[f64], ctx: &HypothesisContext) -> Result<Vec<f64>> {
    check_series(x, ctx)?;
    let f = stft(&TimeSeries::new(x.to_vec())?, ctx.window_size)?;
    Ok(project_with(&mean_differences(&f, ctx), ctx))
}

// P x = Σ_d (a c / M) Re(v_d · conj δ_d), with v_d[t, m] = coef_t e^{-j2πdm/M}.
fn project_with(deltas: &[Complex64], ctx: &HypothesisContext) -> Vec<f64> {
    let m = ctx.window_size;
    let mut out = vec![0.0; m * ctx.windows];
    for (fc, dl) in ctx.frequencies.iter().zip(deltas) {
        let scale = fc.a_len * fc.csym as f64 / m as f64;
        let phase: Vec<f64> = (0..m)
            .map(|k| {
                let w = -2.0 * std::f64::consts::PI * ((fc.d * k) % m) as f64 / m as f64;
                (Complex64::from_polar(1.0, w) * dl.conj()).re
            })
            .collect();
        let before = 1.0 / (ctx.tau - fc.pre) as f64;
        let after = -1.0 / (fc.suc - ctx.tau) as f64;
        for t in fc.pre + 1..=fc.suc {
            let coef = scale * if t <= ctx.tau { before } else { after };
            for (k, ph) in phase.iter().enumerate() {
                out[(t - 1) * m + k] += coef * ph;
            }
        }
    }
    out
}

/// `x = a + b z` with `a = (I - P) x`, `b = σ P x / ‖P x‖`, `z = σ⁻¹ ‖P x‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineDecomposition {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub z_obs: f64,
}

impl LineDecomposition {
    pub fn point(&self, r: f64) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(a, b)| a + b * r).collect()
    }
}

pub fn decompose(x: &TimeSeries, ctx: &HypothesisContext, sigma: f64) -> Result<LineDecomposition> {
    if !(sigma > 0.0) {
        return Err(domain(format!("sigma must be positive, got {sigma}")));
    }
    check_series(x.samples(), ctx)?;
    let f = stft(x, ctx.window_size)?;
    let deltas = mean_differences(&f, ctx);
    let norm = projected_norm_sq(&deltas, ctx).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateStatistic);
    }
    let px = project_with(&deltas, ctx);
    let a = x.samples().iter().zip(&px).map(|(x, p)| x - p).collect();
    let b = px.iter().map(|p| sigma * p / norm).collect();
    Ok(LineDecomposition { a, b, z_obs: norm / sigma })
}

/// Dense `N x N` projection matrix (row-major). Intended for small instances.
///
/// Each interior bin contributes `v v^H` together with its conjugate `v̄ v̄^H`,
/// which makes the sum real.
pub fn projection_matrix(ctx: &HypothesisContext) -> Vec<f64> {
    let m = ctx.window_size;
    let n = m * ctx.windows;
    let mut p = vec![0.0; n * n];
    for fc in &ctx.frequencies {
        let mut bins = vec![fc.d];
        if fc.csym == 2 {
            bins.push(m - fc.d);
        }
        for &bin in &bins {
            let v: Vec<Complex64> = (0..n)
                .map(|i| {
                    let (t, k) = (i / m + 1, i % m);
                    let coef = if t <= fc.pre || t > fc.suc {
                        0.0
                    } else if t <= ctx.tau {
                        1.0 / (ctx.tau - fc.pre) as f64
                    } else {
                        -1.0 / (fc.suc - ctx.tau) as f64
                    };
                    let w = -2.0 * std::f64::consts::PI * ((bin * k) % m) as f64 / m as f64;
                    Complex64::from_polar(coef, w)
                })
                .collect();
            let scale = fc.a_len / m as f64;
            for i in 0..n {
                if v[i].re == 0.0 && v[i].im == 0.0 {
                    continue;
                }
                for j in 0..n {
                    p[i * n + j] += scale * (v[i] * v[j].conj()).re;
                }
            }
        }
    }
    p
}
