//! Chi distribution tail masses over interval unions, kept in log space.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::interval::IntervalUnion;

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 100_000;

/// `ln P(a, x)`, the log of the regularized lower incomplete gamma function.
pub fn ln_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x.is_infinite() {
        return 0.0;
    }
    if x < a + 1.0 {
        ln_p_series(a, x)
    } else {
        ln_one_minus_exp(ln_q_fraction(a, x))
    }
}

/// `ln Q(a, x)`, the log of the regularized upper incomplete gamma function.
pub fn ln_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return f64::NEG_INFINITY;
    }
    if x < a + 1.0 {
        ln_one_minus_exp(ln_p_series(a, x))
    } else {
        ln_q_fraction(a, x)
    }
}

// ln(1 - e^v) for v <= 0.
fn ln_one_minus_exp(v: f64) -> f64 {
    if v > -std::f64::consts::LN_2 {
        (-v.exp_m1()).ln()
    } else {
        (-v.exp()).ln_1p()
    }
}

fn ln_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    a * x.ln() - x - ln_gamma(a) + sum.ln()
}

// Modified Lentz evaluation of the continued fraction for Q.
fn ln_q_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    a * x.ln() - x - ln_gamma(a) + h.ln()
}

/// `ln P(χ_df > z)`.
pub fn chi_ln_sf(z: f64, df: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    ln_gamma_q(df / 2.0, z * z / 2.0)
}

/// `ln P(χ_df ≤ z)`.
pub fn chi_ln_cdf(z: f64, df: f64) -> f64 {
    if z <= 0.0 {
        return f64::NEG_INFINITY;
    }
    ln_gamma_p(df / 2.0, z * z / 2.0)
}

/// Upper quantile: the `z` with `P(χ_df > z) = tail`.
pub fn chi_upper_quantile(tail: f64, df: f64) -> f64 {
    let target = tail.ln();
    let (mut lo, mut hi) = (0.0, df.sqrt() + 1.0);
    while chi_ln_sf(hi, df) > target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_ln_sf(mid, df) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `ln P(lo ≤ χ_df ≤ hi)`; differences are taken on whichever tail keeps precision.
pub fn chi_ln_mass(lo: f64, hi: f64, df: f64) -> f64 {
    let lo = lo.max(0.0);
    if hi <= lo {
        return f64::NEG_INFINITY;
    }
    let mode = (df - 1.0).max(0.0).sqrt();
    if lo >= mode {
        let (a, b) = (chi_ln_sf(lo, df), chi_ln_sf(hi, df));
        a + ln_one_minus_exp(b - a)
    } else {
        let (a, b) = (chi_ln_cdf(hi, df), chi_ln_cdf(lo, df));
        if b == f64::NEG_INFINITY {
            a
        } else {
            a + ln_one_minus_exp(b - a)
        }
    }
}

fn ln_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Survival function of the χ_df distribution truncated to `region`, at `z`.
pub fn truncated_chi_sf(z: f64, df: f64, region: &IntervalUnion) -> Result<f64> {
    let mut den = Vec::new();
    let mut num = Vec::new();
    for p in region.parts() {
        den.push(chi_ln_mass(p.lo, p.hi, df));
        if p.hi > z {
            num.push(chi_ln_mass(p.lo.max(z), p.hi, df));
        }
    }
    let ln_den = ln_sum_exp(&den);
    if !ln_den.is_finite() {
        return Err(Error::ZeroMass { df });
    }
    let p = (ln_sum_exp(&num) - ln_den).exp();
    Ok(p.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn df_two_closed_form() {
        let z = (2.0 * 2f64.ln()).sqrt();
        assert!((chi_ln_sf(z, 2.0).exp() - 0.5).abs() < 1e-14);
        for z in [0.1, 1.0, 3.0, 10.0, 30.0] {
            let expect = -z * z / 2.0;
            assert!((chi_ln_sf(z, 2.0) - expect).abs() < 1e-10 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn matches_chi_squared_distribution() {
        for df in 1..=10 {
            let dist = ChiSquared::new(df as f64).unwrap();
            for &z in &[0.05, 0.5, 1.0, 2.0, 3.0, 5.0] {
                let expect = dist.sf(z * z);
                let got = chi_ln_sf(z, df as f64).exp();
                assert!((got - expect).abs() < 1e-12, "df {df} z {z}: {got} vs {expect}");
                let full = truncated_chi_sf(z, df as f64, &IntervalUnion::single(0.0, f64::INFINITY)).unwrap();
                assert!((full - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn far_tail_stays_finite() {
        let v = chi_ln_sf(60.0, 3.0);
        assert!(v.is_finite() && v < -1700.0);
        // Conditioning deep in the tail: mass beyond z within [z, z+1] is about one.
        let p = truncated_chi_sf(40.5, 4.0, &IntervalUnion::single(40.0, 41.0)).unwrap();
        assert!(p > 0.0 && p < 1e-8);
        let region = IntervalUnion::single(40.0, f64::INFINITY);
        let p = truncated_chi_sf(40.0, 4.0, &region).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_edges() {
        let r = IntervalUnion::single(0.0, 2.0);
        assert_eq!(truncated_chi_sf(2.0, 3.0, &r).unwrap(), 0.0);
        let r = IntervalUnion::single(1.5, f64::INFINITY);
        assert!((truncated_chi_sf(1.5, 3.0, &r).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            truncated_chi_sf(1.0, 3.0, &IntervalUnion::single(1.0, 1.0)),
            Err(Error::ZeroMass { .. })
        ));
    }

    #[test]
    fn quantile_inverts_survival() {
        for df in [1.0, 2.0, 6.0, 40.0] {
            let q = chi_upper_quantile(1e-12, df);
            assert!((chi_ln_sf(q, df) - 1e-12f64.ln()).abs() < 1e-8);
        }
    }

    #[test]
    fn mass_partition_sums_to_one() {
        for df in [1.0, 3.0, 8.0] {
            let cuts = [0.0, 0.3, 1.0, 2.2, 4.0, f64::INFINITY];
            let total: f64 = cuts.windows(2).map(|w| chi_ln_mass(w[0], w[1], df).exp()).sum();
            assert!((total - 1.0).abs() < 1e-13);
        }
    }

    // Monte Carlo check of the truncated survival on a two-piece region.
    #[test]
    fn monte_carlo_truncated_survival() {
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let region = IntervalUnion::from_intervals(vec![
            crate::interval::Interval::new(0.5, 1.2),
            crate::interval::Interval::new(2.0, 2.6),
        ]);
        let (mut inside, mut above) = (0usize, 0usize);
        while inside < 200_000 {
            let z: f64 = (0..3).map(|_| StandardNormal.sample(&mut rng)).map(|v: f64| v * v).sum::<f64>().sqrt();
            if region.contains(z) {
                inside += 1;
                above += (z >= 1.0) as usize;
            }
        }
        let mc = above as f64 / inside as f64;
        let exact = truncated_chi_sf(1.0, 3.0, &region).unwrap();
        assert!((mc - exact).abs() < 0.004, "{mc} vs {exact}");
    }
}
