//! Synthetic sinusoid signals with planted amplitude changes.

use std::f64::consts::PI;

use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::inference::HypothesisContext;
use crate::spectral::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Iid,
    /// AR(1) noise with covariance `σ² ρ^|i-j|`.
    Ar { rho: f64 },
}

/// One planted frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedFrequency {
    pub d: usize,
    pub amplitude: f64,
    /// Last window of the first regime.
    pub t1: usize,
    /// Last window of the second regime.
    pub t2: usize,
}

/// A fully drawn synthetic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub window_size: usize,
    pub windows: usize,
    pub sigma: f64,
    pub delta: f64,
    pub noise: NoiseKind,
    pub planted: Vec<PlantedFrequency>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 || self.windows < 2 {
            return Err(domain("need a window size and window count of at least 2"));
        }
        if !(self.sigma >= 0.0) || !(self.delta >= 0.0) {
            return Err(domain("sigma and delta must be non-negative"));
        }
        if let NoiseKind::Ar { rho } = self.noise {
            if !(0.0..1.0).contains(&rho) {
                return Err(domain(format!("rho must lie in [0, 1), got {rho}")));
            }
        }
        for p in &self.planted {
            if p.d >= crate::spectral::num_frequencies(self.window_size) {
                return Err(domain(format!("planted frequency {} out of range", p.d)));
            }
            if self.delta > 0.0 && !(0 < p.t1 && p.t1 < p.t2 && p.t2 < self.windows) {
                return Err(domain(format!("change windows ({}, {}) invalid for T = {}", p.t1, p.t2, self.windows)));
            }
        }
        Ok(())
    }

    pub fn frequencies(&self) -> Vec<usize> {
        self.planted.iter().map(|p| p.d).collect()
    }
}

/// Default change windows: the reference design's `(18, 20, 22)` and `(38, 40, 42)` at
/// `T = 60`, rescaled to `T` by rounding `T · t / 60`.
pub fn default_change_windows(windows: usize) -> (Vec<usize>, Vec<usize>) {
    let scale = |t: usize| ((windows * t) as f64 / 60.0).round() as usize;
    ([18, 20, 22].map(scale).to_vec(), [38, 40, 42].map(scale).to_vec())
}

/// Bins whose sinusoid `sin(2π d n / M)` is not identically zero.
pub fn plantable_frequencies(m: usize) -> Vec<usize> {
    (1..crate::spectral::num_frequencies(m)).filter(|&d| 2 * d != m).collect()
}

/// Draws planted frequencies (without replacement) and base amplitudes `U[0, 1)`.
pub fn draw_spec<R: Rng + ?Sized>(
    m: usize,
    windows: usize,
    sigma: f64,
    delta: f64,
    noise: NoiseKind,
    count: usize,
    change_windows: &(Vec<usize>, Vec<usize>),
    rng: &mut R,
) -> Result<SyntheticSpec> {
    let mut pool = plantable_frequencies(m);
    if count > pool.len() || count > change_windows.0.len() || count > change_windows.1.len() {
        return Err(domain(format!("cannot plant {count} frequencies with window size {m}")));
    }
    let mut planted = Vec::with_capacity(count);
    for i in 0..count {
        let d = pool.swap_remove(rng.random_range(0..pool.len()));
        let amplitude = rng.random::<f64>();
        planted.push(PlantedFrequency { d, amplitude, t1: change_windows.0[i], t2: change_windows.1[i] });
    }
    let spec = SyntheticSpec { window_size: m, windows, sigma, delta, noise, planted };
    spec.validate()?;
    Ok(spec)
}

/// Noiseless mean signal.
pub fn mean_signal(spec: &SyntheticSpec) -> Vec<f64> {
    let m = spec.window_size;
    let n = m * spec.windows;
    let mut s = vec![0.0; n];
    for p in &spec.planted {
        for (i, v) in s.iter_mut().enumerate() {
            // i is the zero-based sample index n - 1.
            let amp = if i < m * p.t1 {
                p.amplitude
            } else if i < m * p.t2 {
                p.amplitude + spec.delta
            } else {
                p.amplitude + 2.0 * spec.delta
            };
            *v += amp * (2.0 * PI * ((p.d * i) % m) as f64 / m as f64).sin();
        }
    }
    s
}

/// Gaussian noise with covariance `σ² ρ^|i-j|`, via the stationary AR(1) recursion.
pub fn generate_correlated_noise<R: Rng + ?Sized>(n: usize, sigma: f64, rho: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(domain(format!("rho must lie in [0, 1), got {rho}")));
    }
    let innov = sigma * (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(n);
    let mut prev = 0.0;
    for i in 0..n {
        let z: f64 = StandardNormal.sample(rng);
        prev = if i == 0 { sigma * z } else { rho * prev + innov * z };
        out.push(prev);
    }
    Ok(out)
}

/// Mean signal plus noise.
pub fn generate<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<TimeSeries> {
    spec.validate()?;
    let mut x = mean_signal(spec);
    let rho = match spec.noise {
        NoiseKind::Iid => 0.0,
        NoiseKind::Ar { rho } => rho,
    };
    let noise = generate_correlated_noise(x.len(), spec.sigma, rho, rng)?;
    for (v, e) in x.iter_mut().zip(noise) {
        *v += e;
    }
    TimeSeries::new(x)
}

/// Whether a tested location lies within the planted change windows of its frequencies.
pub fn is_correct_detection(ctx: &HypothesisContext, spec: &SyntheticSpec) -> bool {
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    for fc in &ctx.frequencies {
        match spec.planted.iter().find(|p| p.d == fc.d) {
            Some(p) => {
                t1.push(p.t1);
                t2.push(p.t2);
            }
            None => return false,
        }
    }
    let within = |ts: &[usize]| {
        let lo = *ts.iter().min().unwrap();
        let hi = *ts.iter().max().unwrap();
        (lo..=hi).contains(&ctx.tau)
    };
    !t1.is_empty() && (within(&t1) || within(&t2))
}
