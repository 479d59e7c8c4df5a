//! Noise-level estimate from the detected segmentation.

use crate::detect::{detect, DetectConfig};
use crate::error::Result;
use crate::spectral::{segment_mean, stft, TimeSeries};

/// Per frequency, the largest within-segment sample variance of the spectra;
/// the square root of their average, divided by `sqrt(M)`.
///
/// Segments of a single window carry no variance information and are skipped.
/// Returns 0 when no segment has two or more windows.
pub fn estimate_variance(x: &TimeSeries, config: &DetectConfig) -> Result<f64> {
    let det = detect(x, config)?;
    let f = stft(x, config.window_size)?;
    let mut maxima = Vec::with_capacity(f.frequencies());
    for d in 0..f.frequencies() {
        let mut best: Option<f64> = None;
        for (s, e) in det.config.segments(d) {
            if e == s {
                continue;
            }
            let mean = segment_mean(&f, d, s, e)?;
            let v = (s..=e).map(|t| (f.at(t, d) - mean).norm_sqr()).sum::<f64>() / (e - s) as f64;
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
        maxima.extend(best);
    }
    if maxima.is_empty() {
        return Ok(0.0);
    }
    let avg = maxima.iter().sum::<f64>() / maxima.len() as f64;
    Ok((avg / config.window_size as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, n: usize, sd: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect()
    }

    fn config() -> DetectConfig {
        DetectConfig { window_size: 8, ..DetectConfig::default() }
    }

    #[test]
    fn zero_noise_gives_zero() {
        let x: Vec<f64> = (0..240).map(|n| (2.0 * std::f64::consts::PI * n as f64 / 8.0).sin()).collect();
        let s = estimate_variance(&TimeSeries::new(x).unwrap(), &config()).unwrap();
        assert!(s < 1e-6, "{s}");
    }

    #[test]
    fn homogeneous_in_scale() {
        let x = noise(3, 240, 1.0);
        let base = estimate_variance(&TimeSeries::new(x.clone()).unwrap(), &config()).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        // Penalties and temperatures scale with the data, so the detection is unchanged.
        let cfg = DetectConfig { sigma2: 9.0, c0_plus: 9.0 * config().c0_plus, ..config() };
        let s = estimate_variance(&TimeSeries::new(scaled).unwrap(), &cfg).unwrap();
        assert!((s - 3.0 * base).abs() < 1e-9 * s.max(1.0), "{s} vs {base}");
    }

    #[test]
    fn unit_noise_lands_near_one() {
        let mut inside = 0;
        for seed in 0..100 {
            let s = estimate_variance(&TimeSeries::new(noise(seed, 240, 1.0)).unwrap(), &config()).unwrap();
            if (0.8..=1.3).contains(&s) {
                inside += 1;
            }
        }
        assert!(inside >= 90, "{inside} of 100 in [0.8, 1.3]");
    }
}
