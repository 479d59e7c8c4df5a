//! Segment costs, the penalized objective and its restriction to a line in data space.
//!
//! Along `x(r) = a + b r` every spectrum is affine in `r`, so every segment
//! cost is a squared modulus of an affine complex function and therefore an
//! exact quadratic `e2 r^2 + e1 r + e0`. [`LineCache`] stores prefix sums that
//! give those coefficients in O(1) per segment.

use std::ops::{Add, AddAssign, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Result};
use crate::spectral::{check_segment, segment_mean, stft_raw, sym_coeff, SpectralSequences};

/// Per-frequency change-point sets.
///
/// Each `τ^(d)` is a strictly increasing subset of `1..T`; a change point `τ`
/// separates window `τ` from window `τ + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CpConfiguration {
    windows: usize,
    per_freq: Vec<Vec<usize>>,
}

impl CpConfiguration {
    pub fn empty(windows: usize, frequencies: usize) -> Self {
        Self { windows, per_freq: vec![Vec::new(); frequencies] }
    }

    pub fn new(windows: usize, per_freq: Vec<Vec<usize>>) -> Result<Self> {
        for (d, set) in per_freq.iter().enumerate() {
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(domain(format!("change points of frequency {d} are not strictly increasing")));
            }
            if set.iter().any(|&tau| tau == 0 || tau >= windows) {
                return Err(domain(format!("change point of frequency {d} outside 1..{}", windows)));
            }
        }
        Ok(Self { windows, per_freq })
    }

    pub fn windows(&self) -> usize {
        self.windows
    }

    pub fn frequencies(&self) -> usize {
        self.per_freq.len()
    }

    pub fn change_points(&self, d: usize) -> &[usize] {
        &self.per_freq[d]
    }

    pub fn per_frequency(&self) -> &[Vec<usize>] {
        &self.per_freq
    }

    /// Sorted union of all per-frequency sets.
    pub fn union(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.per_freq.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    /// Number of distinct change-point locations `K`.
    pub fn k(&self) -> usize {
        self.union().len()
    }

    /// Total number of per-frequency change points `Σ K^(d)`.
    pub fn total_per_frequency(&self) -> usize {
        self.per_freq.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, d: usize, tau: usize) -> bool {
        self.per_freq[d].binary_search(&tau).is_ok()
    }

    /// Frequencies that carry at least one change point.
    pub fn active_frequencies(&self) -> Vec<usize> {
        (0..self.per_freq.len()).filter(|&d| !self.per_freq[d].is_empty()).collect()
    }

    /// Segments `(s, e)` (1-based, inclusive) induced on frequency `d`.
    pub fn segments(&self, d: usize) -> Vec<(usize, usize)> {
        segments_of(&self.per_freq[d], self.windows)
    }

    pub(crate) fn set_mut(&mut self, d: usize) -> &mut Vec<usize> {
        &mut self.per_freq[d]
    }
}

pub(crate) fn segments_of(cps: &[usize], windows: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(cps.len() + 1);
    let mut start = 1;
    for &tau in cps {
        out.push((start, tau));
        start = tau + 1;
    }
    out.push((start, windows));
    out
}

/// Penalty weights of the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    /// Per-frequency penalty `β^(d)` for each change point.
    pub beta: Vec<f64>,
    /// Penalty `γ` for each distinct change-point location.
    pub gamma: f64,
    /// Scale of `γ` in units of `M σ² ln T`.
    pub kappa: f64,
}

impl PenaltyParams {
    /// BIC-derived penalties for window size `m`, noise variance `sigma2` and `t` windows.
    pub fn bic(m: usize, sigma2: f64, t: usize, kappa: f64) -> Result<Self> {
        Ok(Self {
            beta: bic_beta(m, sigma2, t)?,
            gamma: gamma_penalty(kappa, m, sigma2, t)?,
            kappa,
        })
    }

    pub fn penalty(&self, cfg: &CpConfiguration) -> f64 {
        let per_freq: f64 = cfg
            .per_frequency()
            .iter()
            .zip(&self.beta)
            .map(|(set, b)| b * set.len() as f64)
            .sum();
        per_freq + self.gamma * cfg.k() as f64
    }
}

/// `β^(d) = (c_sym^(d) + 1) M σ² ln T` for every retained bin.
pub fn bic_beta(m: usize, sigma2: f64, t: usize) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(domain("window size must be at least 2"));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(domain(format!("noise variance must be positive, got {sigma2}")));
    }
    if t < 2 {
        return Err(domain(format!("need at least two windows, got {t}")));
    }
    let unit = m as f64 * sigma2 * (t as f64).ln();
    Ok((0..crate::spectral::num_frequencies(m))
        .map(|d| (sym_coeff(d, m) as f64 + 1.0) * unit)
        .collect())
}

/// `γ = κ M σ² ln T`.
pub fn gamma_penalty(kappa: f64, m: usize, sigma2: f64, t: usize) -> Result<f64> {
    if !(kappa >= 0.0) {
        return Err(domain(format!("kappa must be non-negative, got {kappa}")));
    }
    if !(sigma2 > 0.0) || t < 2 {
        return Err(domain("gamma needs a positive variance and at least two windows"));
    }
    Ok(kappa * m as f64 * sigma2 * (t as f64).ln())
}

/// Cost of windows `s..=e` of bin `d`: `c_sym Σ |F_t - mean|²`.
pub fn segment_cost(f: &SpectralSequences, d: usize, s: usize, e: usize) -> Result<f64> {
    let mean = segment_mean(f, d, s, e)?;
    let c = sym_coeff(d, f.window_size()) as f64;
    Ok(c * (s..=e).map(|t| (f.at(t, d) - mean).norm_sqr()).sum::<f64>())
}

/// Full objective `Σ_d Σ_k C(segment) + Σ_d β^(d) K^(d) + γ K`, evaluated directly.
pub fn objective(cfg: &CpConfiguration, f: &SpectralSequences, pen: &PenaltyParams) -> Result<f64> {
    check_config(cfg, f.windows(), f.frequencies())?;
    let mut total = 0.0;
    for d in 0..cfg.frequencies() {
        for (s, e) in cfg.segments(d) {
            total += segment_cost(f, d, s, e)?;
        }
    }
    Ok(total + pen.penalty(cfg))
}

pub(crate) fn check_config(cfg: &CpConfiguration, t: usize, d: usize) -> Result<()> {
    if cfg.windows() != t || cfg.frequencies() != d {
        return Err(shape(format!(
            "configuration is {}x{} but spectra are {t}x{d}",
            cfg.windows(),
            cfg.frequencies()
        )));
    }
    Ok(())
}

/// Source of segment costs used by the dynamic program and the annealer.
pub trait SegmentCosts {
    fn windows(&self) -> usize;
    fn frequencies(&self) -> usize;
    /// Cost of windows `s..=e` (1-based, inclusive) of bin `d`.
    fn cost(&self, d: usize, s: usize, e: usize) -> f64;
}

/// O(1) segment costs from per-frequency prefix sums of centred spectra.
#[derive(Debug, Clone)]
pub struct SegmentCache {
    t: usize,
    d: usize,
    csym: Vec<f64>,
    // (T+1) x D, row 0 is zero.
    sum: Vec<Complex64>,
    sq: Vec<f64>,
}

impl SegmentCache {
    pub fn new(f: &SpectralSequences) -> Self {
        let (t, d) = (f.windows(), f.frequencies());
        let means: Vec<Complex64> = (0..d)
            .map(|k| (1..=t).map(|w| f.at(w, k)).sum::<Complex64>() / t as f64)
            .collect();
        let mut sum = vec![Complex64::new(0.0, 0.0); (t + 1) * d];
        let mut sq = vec![0.0; (t + 1) * d];
        for w in 1..=t {
            for k in 0..d {
                let v = f.at(w, k) - means[k];
                sum[w * d + k] = sum[(w - 1) * d + k] + v;
                sq[w * d + k] = sq[(w - 1) * d + k] + v.norm_sqr();
            }
        }
        let csym = (0..d).map(|k| sym_coeff(k, f.window_size()) as f64).collect();
        Self { t, d, csym, sum, sq }
    }
}

impl SegmentCosts for SegmentCache {
    fn windows(&self) -> usize {
        self.t
    }

    fn frequencies(&self) -> usize {
        self.d
    }

    #[inline]
    fn cost(&self, d: usize, s: usize, e: usize) -> f64 {
        if s == e {
            return 0.0;
        }
        let n = (e - s + 1) as f64;
        let (lo, hi) = ((s - 1) * self.d + d, e * self.d + d);
        let sum = self.sum[hi] - self.sum[lo];
        let sq = self.sq[hi] - self.sq[lo];
        self.csym[d] * (sq - sum.norm_sqr() / n)
    }
}

/// Coefficients of `e2 r² + e1 r + e0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadCoeffs {
    pub e2: f64,
    pub e1: f64,
    pub e0: f64,
}

impl QuadCoeffs {
    pub const ZERO: QuadCoeffs = QuadCoeffs { e2: 0.0, e1: 0.0, e0: 0.0 };

    pub fn new(e2: f64, e1: f64, e0: f64) -> Self {
        Self { e2, e1, e0 }
    }

    pub fn constant(c: f64) -> Self {
        Self { e2: 0.0, e1: 0.0, e0: c }
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        (self.e2 * r + self.e1) * r + self.e0
    }

    pub fn scale(self, k: f64) -> Self {
        Self { e2: self.e2 * k, e1: self.e1 * k, e0: self.e0 * k }
    }

    /// Smallest value over the real line; `-inf` when the quadratic is unbounded below.
    pub fn minimum(&self) -> f64 {
        if self.e2 > 0.0 {
            self.e0 - self.e1 * self.e1 / (4.0 * self.e2)
        } else if self.e2 == 0.0 && self.e1 == 0.0 {
            self.e0
        } else {
            f64::NEG_INFINITY
        }
    }
}

impl Add for QuadCoeffs {
    type Output = QuadCoeffs;
    fn add(self, o: QuadCoeffs) -> QuadCoeffs {
        QuadCoeffs { e2: self.e2 + o.e2, e1: self.e1 + o.e1, e0: self.e0 + o.e0 }
    }
}

impl AddAssign for QuadCoeffs {
    fn add_assign(&mut self, o: QuadCoeffs) {
        self.e2 += o.e2;
        self.e1 += o.e1;
        self.e0 += o.e0;
    }
}

impl Sub for QuadCoeffs {
    type Output = QuadCoeffs;
    fn sub(self, o: QuadCoeffs) -> QuadCoeffs {
        QuadCoeffs { e2: self.e2 - o.e2, e1: self.e1 - o.e1, e0: self.e0 - o.e0 }
    }
}

impl Neg for QuadCoeffs {
    type Output = QuadCoeffs;
    fn neg(self) -> QuadCoeffs {
        self.scale(-1.0)
    }
}

/// Prefix sums that turn segment costs along `a + b r` into quadratics.
#[derive(Debug, Clone)]
pub struct LineCache {
    t: usize,
    d: usize,
    csym: Vec<f64>,
    sa: Vec<Complex64>,
    sb: Vec<Complex64>,
    saa: Vec<f64>,
    sbb: Vec<f64>,
    sab: Vec<f64>,
}

impl LineCache {
    /// Builds from the spectra of the offset `a` and the direction `b`.
    pub fn from_spectra(fa: &SpectralSequences, fb: &SpectralSequences) -> Result<Self> {
        if fa.windows() != fb.windows() || fa.window_size() != fb.window_size() {
            return Err(shape("offset and direction spectra differ in shape"));
        }
        let (t, d) = (fa.windows(), fa.frequencies());
        let centre = |f: &SpectralSequences| -> Vec<Complex64> {
            (0..d)
                .map(|k| (1..=t).map(|w| f.at(w, k)).sum::<Complex64>() / t as f64)
                .collect()
        };
        let (ma, mb) = (centre(fa), centre(fb));
        let zero = Complex64::new(0.0, 0.0);
        let mut sa = vec![zero; (t + 1) * d];
        let mut sb = vec![zero; (t + 1) * d];
        let mut saa = vec![0.0; (t + 1) * d];
        let mut sbb = vec![0.0; (t + 1) * d];
        let mut sab = vec![0.0; (t + 1) * d];
        for w in 1..=t {
            for k in 0..d {
                let (i, j) = (w * d + k, (w - 1) * d + k);
                let va = fa.at(w, k) - ma[k];
                let vb = fb.at(w, k) - mb[k];
                sa[i] = sa[j] + va;
                sb[i] = sb[j] + vb;
                saa[i] = saa[j] + va.norm_sqr();
                sbb[i] = sbb[j] + vb.norm_sqr();
                sab[i] = sab[j] + (va * vb.conj()).re;
            }
        }
        let csym = (0..d).map(|k| sym_coeff(k, fa.window_size()) as f64).collect();
        Ok(Self { t, d, csym, sa, sb, saa, sbb, sab })
    }

    /// Builds from raw offset and direction vectors of length `m * T`.
    pub fn new(a: &[f64], b: &[f64], m: usize) -> Result<Self> {
        if a.len() != b.len() {
            return Err(shape(format!("offset has length {} but direction {}", a.len(), b.len())));
        }
        if m < 2 || a.is_empty() || a.len() % m != 0 {
            return Err(shape(format!("length {} is not a multiple of window size {m}", a.len())));
        }
        let t = a.len() / m;
        Self::from_spectra(&stft_raw(a, m, t), &stft_raw(b, m, t))
    }

    pub fn windows(&self) -> usize {
        self.t
    }

    pub fn frequencies(&self) -> usize {
        self.d
    }

    /// Segment cost of windows `s..=e` of bin `d` as a quadratic in `r`.
    ///
    /// With `p_t`, `q_t` the centred offset and direction spectra,
    /// `|p + q r|² = |q|² r² + 2 Re(p q̄) r + |p|²` summed over the segment.
    #[inline]
    pub fn segment_quad(&self, d: usize, s: usize, e: usize) -> QuadCoeffs {
        if s == e {
            return QuadCoeffs::ZERO;
        }
        let n = (e - s + 1) as f64;
        let (lo, hi) = ((s - 1) * self.d + d, e * self.d + d);
        let sa = self.sa[hi] - self.sa[lo];
        let sb = self.sb[hi] - self.sb[lo];
        let c = self.csym[d];
        QuadCoeffs {
            e2: c * ((self.sbb[hi] - self.sbb[lo]) - sb.norm_sqr() / n),
            e1: 2.0 * c * ((self.sab[hi] - self.sab[lo]) - (sa * sb.conj()).re / n),
            e0: c * ((self.saa[hi] - self.saa[lo]) - sa.norm_sqr() / n),
        }
    }

    /// Costs at a fixed point `r` of the line.
    pub fn at(&self, r: f64) -> LinePoint<'_> {
        LinePoint { line: self, r }
    }
}

/// Segment costs of `a + b r` for one `r`, evaluated through the line quadratics.
#[derive(Debug, Clone, Copy)]
pub struct LinePoint<'a> {
    line: &'a LineCache,
    r: f64,
}

impl SegmentCosts for LinePoint<'_> {
    fn windows(&self) -> usize {
        self.line.t
    }

    fn frequencies(&self) -> usize {
        self.line.d
    }

    #[inline]
    fn cost(&self, d: usize, s: usize, e: usize) -> f64 {
        self.line.segment_quad(d, s, e).eval(self.r)
    }
}

/// Quadratic of `segment_cost(stft(a + b r), d, s, e)` in `r`.
pub fn segment_cost_quadratic(
    d: usize,
    s: usize,
    e: usize,
    a: &[f64],
    b: &[f64],
    m: usize,
) -> Result<QuadCoeffs> {
    let line = LineCache::new(a, b, m)?;
    if d >= line.d || s == 0 || s > e || e > line.t {
        return Err(domain(format!("invalid segment {s}..={e} of frequency {d}")));
    }
    Ok(line.segment_quad(d, s, e))
}

/// Objective of `cfg` along the line; the penalties are folded into `e0`.
pub fn objective_quadratic(
    cfg: &CpConfiguration,
    line: &LineCache,
    pen: &PenaltyParams,
) -> Result<QuadCoeffs> {
    check_config(cfg, line.t, line.d)?;
    let mut q = QuadCoeffs::ZERO;
    for d in 0..cfg.frequencies() {
        for (s, e) in cfg.segments(d) {
            q += line.segment_quad(d, s, e);
        }
    }
    q.e0 += pen.penalty(cfg);
    Ok(q)
}

/// Checks a `(d, s, e)` triple against spectra; exposed for callers that build segments by hand.
pub fn validate_segment(f: &SpectralSequences, d: usize, s: usize, e: usize) -> Result<()> {
    check_segment(f, d, s, e)
}
