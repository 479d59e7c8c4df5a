//! Summary statistics for Monte Carlo experiments.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Binomial, ContinuousCDF, DiscreteCDF};

/// One-sample Kolmogorov–Smirnov test against `U(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_uniform(values: &[f64]) -> Option<KsResult> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let x = x.clamp(0.0, 1.0);
        d = d.max((i + 1) as f64 / n - x).max(x - i as f64 / n);
    }
    Some(KsResult { n: v.len(), statistic: d, p_value: kolmogorov_sf(d, v.len()) })
}

/// Asymptotic Kolmogorov tail with Stephens' small-sample correction.
pub fn kolmogorov_sf(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u32 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Exact (Clopper–Pearson) two-sided interval for a binomial proportion.
pub fn clopper_pearson(successes: usize, n: usize, level: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let a = (1.0 - level) / 2.0;
    let (k, nf) = (successes as f64, n as f64);
    let lo = if successes == 0 { 0.0 } else { Beta::new(k, nf - k + 1.0).unwrap().inverse_cdf(a) };
    let hi = if successes == n { 1.0 } else { Beta::new(k + 1.0, nf - k).unwrap().inverse_cdf(1.0 - a) };
    (lo, hi)
}

/// Central `level` acceptance interval for the rejection rate of `n` tests at level `alpha`,
/// from the `Binomial(n, alpha)` quantiles.
pub fn binomial_acceptance(n: usize, alpha: f64, level: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let dist = Binomial::new(alpha, n as u64).unwrap();
    let tail = (1.0 - level) / 2.0;
    let quantile = |p: f64| (0..=n as u64).find(|&k| dist.cdf(k) >= p).unwrap_or(n as u64);
    (quantile(tail) as f64 / n as f64, quantile(1.0 - tail) as f64 / n as f64)
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acceptance_interval_for_500_tests() {
        let (lo, hi) = binomial_acceptance(500, 0.05, 0.95);
        assert!((lo - 0.032).abs() < 1e-12, "{lo}");
        // Binomial(500, 0.05) quantiles at 0.025 and 0.975 are 16 and 35.
        assert!((hi - 0.070).abs() < 1e-12, "{hi}");
    }

    #[test]
    fn clopper_pearson_known_values() {
        // 5 of 20 at 95%: (0.0866, 0.4910).
        let (lo, hi) = clopper_pearson(5, 20, 0.95);
        assert!((lo - 0.0866).abs() < 1e-4 && (hi - 0.4910).abs() < 1e-4);
        assert_eq!(clopper_pearson(0, 10, 0.95).0, 0.0);
        assert_eq!(clopper_pearson(10, 10, 0.95).1, 1.0);
    }

    #[test]
    fn ks_on_grid_and_on_skewed_sample() {
        let grid: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_uniform(&grid).unwrap();
        assert!((r.statistic - 0.0005).abs() < 1e-12);
        assert!(r.p_value > 0.99);
        let skewed: Vec<f64> = grid.iter().map(|u| u * u).collect();
        assert!(ks_uniform(&skewed).unwrap().p_value < 1e-10);
        assert!(ks_uniform(&[]).is_none());
        // Tabulated critical value: D = 1.358 / sqrt(n) at 5% for large n.
        assert!((kolmogorov_sf(1.358 / 1000.0, 1_000_000) - 0.05).abs() < 2e-3);
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[0.1, 0.5, 0.9]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[0.9, 0.5, 0.1]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0], &[0.3, 0.3]), 0.0);
    }
}
