//! Per-frequency optimal partitioning and the conditions that pin its choices.

use serde::{Deserialize, Serialize};

use crate::error::{shape, Result};
use crate::interval::IntervalUnion;
use crate::objective::{CpConfiguration, LineCache, PenaltyParams, QuadCoeffs, SegmentCache, SegmentCosts};
use crate::spectral::SpectralSequences;

/// Bellman argmins of every frequency: `argmin[d][t - 1] = s*(t)` for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpTrace {
    windows: usize,
    argmin: Vec<Vec<u32>>,
}

impl DpTrace {
    pub fn windows(&self) -> usize {
        self.windows
    }

    pub fn frequencies(&self) -> usize {
        self.argmin.len()
    }

    /// Last change point before `t` on the optimal path ending at `t` (0 means none).
    pub fn split(&self, d: usize, t: usize) -> usize {
        self.argmin[d][t - 1] as usize
    }

    pub fn argmins(&self, d: usize) -> &[u32] {
        &self.argmin[d]
    }
}

/// Optimal partitioning of one frequency: returns the change points and `s*(t)` for `t = 1..=T`.
///
/// `opt(0) = 0`, `opt(t) = min_s opt(s) + C(s+1..t) + β [s > 0]`. The scan runs
/// over increasing `s` with a strict comparison, so the smallest `s` wins ties.
pub fn optimal_partition<C: SegmentCosts>(costs: &C, d: usize, beta: f64) -> (Vec<usize>, Vec<u32>) {
    let t_max = costs.windows();
    let mut opt = vec![0.0; t_max + 1];
    let mut argmin = vec![0u32; t_max];
    for t in 1..=t_max {
        let mut best = f64::INFINITY;
        let mut best_s = 0;
        for s in 0..t {
            let v = opt[s] + costs.cost(d, s + 1, t) + if s > 0 { beta } else { 0.0 };
            if v < best {
                best = v;
                best_s = s;
            }
        }
        opt[t] = best;
        argmin[t - 1] = best_s as u32;
    }
    (backtrack(&argmin), argmin)
}

fn backtrack(argmin: &[u32]) -> Vec<usize> {
    let mut cps = Vec::new();
    let mut t = argmin.len();
    while t > 0 {
        let s = argmin[t - 1] as usize;
        if s > 0 {
            cps.push(s);
        }
        t = s;
    }
    cps.reverse();
    cps
}

/// Runs optimal partitioning on every frequency.
///
/// Returns `𝒯^init`, the frequencies with at least one change point, and the trace.
pub fn initial_configuration<C: SegmentCosts>(
    costs: &C,
    pen: &PenaltyParams,
) -> Result<(CpConfiguration, Vec<usize>, DpTrace)> {
    if pen.beta.len() != costs.frequencies() {
        return Err(shape(format!(
            "{} penalties for {} frequencies",
            pen.beta.len(),
            costs.frequencies()
        )));
    }
    let t = costs.windows();
    let mut sets = Vec::with_capacity(costs.frequencies());
    let mut argmin = Vec::with_capacity(costs.frequencies());
    for (d, &beta) in pen.beta.iter().enumerate() {
        let (cps, a) = optimal_partition(costs, d, beta);
        sets.push(cps);
        argmin.push(a);
    }
    let cfg = CpConfiguration::new(t, sets)?;
    let active = cfg.active_frequencies();
    Ok((cfg, active, DpTrace { windows: t, argmin }))
}

/// Convenience wrapper computing costs from spectra.
pub fn initial_configuration_from_spectra(
    f: &SpectralSequences,
    pen: &PenaltyParams,
) -> Result<(CpConfiguration, Vec<usize>, DpTrace)> {
    initial_configuration(&SegmentCache::new(f), pen)
}

/// Visits every Bellman comparison of the trace as a quadratic `q(r) <= 0` along the line.
///
/// For each `d`, `t` and competitor `s != s*(t)`:
/// `opt_q(s*) + C_q(s*+1..t) + β[s*>0] - (opt_q(s) + C_q(s+1..t) + β[s>0]) <= 0`,
/// where `opt_q` follows the recorded argmins.
pub fn for_each_dp_inequality(
    trace: &DpTrace,
    line: &LineCache,
    pen: &PenaltyParams,
    mut visit: impl FnMut(&QuadCoeffs),
) -> Result<()> {
    let t_max = trace.windows;
    if line.windows() != t_max || line.frequencies() != trace.frequencies() || pen.beta.len() != trace.frequencies() {
        return Err(shape("trace, line and penalties disagree in dimensions"));
    }
    let mut optq = vec![QuadCoeffs::ZERO; t_max + 1];
    let mut cand = vec![QuadCoeffs::ZERO; t_max];
    for d in 0..trace.frequencies() {
        let beta = pen.beta[d];
        for t in 1..=t_max {
            for s in 0..t {
                let mut q = optq[s] + line.segment_quad(d, s + 1, t);
                if s > 0 {
                    q.e0 += beta;
                }
                cand[s] = q;
            }
            let star = trace.split(d, t);
            for (s, q) in cand[..t].iter().enumerate() {
                if s != star {
                    visit(&(cand[star] - *q));
                }
            }
            optq[t] = cand[star];
        }
    }
    Ok(())
}

/// All Bellman comparisons as a list; see [`for_each_dp_inequality`].
pub fn dp_inequalities(trace: &DpTrace, line: &LineCache, pen: &PenaltyParams) -> Result<Vec<QuadCoeffs>> {
    let mut out = Vec::new();
    for_each_dp_inequality(trace, line, pen, |q| out.push(*q))?;
    Ok(out)
}

/// Restricts `region` to the points where every Bellman choice of the trace is reproduced.
pub fn restrict_dp(region: &mut IntervalUnion, trace: &DpTrace, line: &LineCache, pen: &PenaltyParams) -> Result<()> {
    for_each_dp_inequality(trace, line, pen, |q| {
        if !region.is_empty() {
            region.restrict(q);
        }
    })
}
