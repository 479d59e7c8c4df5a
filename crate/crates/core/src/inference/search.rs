//! Exact truncation region by sweeping the line through the data.
//!
//! Each run of the detector at a point `z` of the line comes with the interval
//! union on which every one of its decisions is reproduced. Runs are placed in
//! the first uncovered gap until `[0, z_max]` is covered; regions of runs whose
//! output matches the target form the truncation region.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::detect::{run_algorithm, Detection};
use crate::dp::{initial_configuration, restrict_dp};
use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalUnion};
use crate::objective::{CpConfiguration, LineCache, PenaltyParams};
use crate::sa::{restrict_sa, SaParams};

/// Gaps narrower than this are treated as covered.
pub const MERGE_TOLERANCE: f64 = 1e-10;
/// Offset of a probe past the edge of the covered set, and the forced advance on a stall.
pub const STEP: f64 = 1e-4;
/// Distance within which a probe point is snapped into its own region.
pub const SNAP_TOLERANCE: f64 = 1e-8;

const MAX_PROBES: usize = 200_000;

/// An algorithm evaluated along a line: its output at `z` and the region where that run repeats.
pub trait LineAlgorithm {
    type Output: PartialEq;

    fn run(&self, z: f64) -> Result<(Self::Output, IntervalUnion)>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub region: IntervalUnion,
    pub probes: usize,
    pub stalls: usize,
}

/// Covers `[0, z_max]` starting from the region of the observed run.
pub fn parametric_search<A: LineAlgorithm>(
    alg: &A,
    target: &A::Output,
    observed: &IntervalUnion,
    z_max: f64,
) -> Result<SearchOutcome> {
    let domain = IntervalUnion::single(0.0, z_max);
    let mut covered = observed.intersect(&domain);
    let mut region = covered.clone();
    let mut probes = 0;
    let mut stalls = 0;
    loop {
        let Some(gap) = covered.gaps_within(0.0, z_max).into_iter().find(|g| g.width() > MERGE_TOLERANCE) else {
            break;
        };
        if probes >= MAX_PROBES {
            warn!("line search stopped after {MAX_PROBES} runs with [{}, {}] uncovered", gap.lo, gap.hi);
            break;
        }
        let z = if gap.lo <= 0.0 && !covered.contains(0.0) {
            0.0
        } else {
            gap.lo + STEP.min(gap.width() / 2.0)
        };
        let (out, mut piece) = alg.run(z)?;
        probes += 1;
        if piece.distance(z) > SNAP_TOLERANCE {
            warn!("run at z = {z} does not reproduce itself; advancing by {STEP}");
            stalls += 1;
            piece = IntervalUnion::single(gap.lo, (z + STEP).min(gap.hi));
        }
        let piece = piece.intersect(&domain);
        if &out == target {
            region = region.union(&piece);
        }
        covered = covered.union(&piece);
    }
    Ok(SearchOutcome { region, probes, stalls })
}

/// Detector replayed along `a + b r`, conditioned on every decision of DP and annealing.
pub struct FullAlgorithm<'a> {
    pub line: &'a LineCache,
    pub pen: &'a PenaltyParams,
    pub params: &'a SaParams,
    pub z_max: f64,
}

impl FullAlgorithm<'_> {
    /// The run at `z` together with its conditioning region within `[0, z_max]`.
    pub fn run_detailed(&self, z: f64) -> Result<(Detection, IntervalUnion)> {
        let det = run_algorithm(&self.line.at(z), self.pen, self.params)?;
        let mut region = IntervalUnion::single(0.0, self.z_max.max(z));
        restrict_dp(&mut region, &det.dp, self.line, self.pen)?;
        restrict_sa(&mut region, &det.sa, self.line);
        Ok((det, region))
    }
}

impl LineAlgorithm for FullAlgorithm<'_> {
    type Output = CpConfiguration;

    fn run(&self, z: f64) -> Result<(CpConfiguration, IntervalUnion)> {
        let (det, region) = self.run_detailed(z)?;
        Ok((det.config, region))
    }
}

/// Optimal partitioning only: output `𝒯^init`, conditioned on the Bellman choices.
pub struct DpOnlyAlgorithm<'a> {
    pub line: &'a LineCache,
    pub pen: &'a PenaltyParams,
    pub z_max: f64,
}

impl LineAlgorithm for DpOnlyAlgorithm<'_> {
    type Output = CpConfiguration;

    fn run(&self, z: f64) -> Result<(CpConfiguration, IntervalUnion)> {
        let (init, _, trace) = initial_configuration(&self.line.at(z), self.pen)?;
        let mut region = IntervalUnion::single(0.0, self.z_max.max(z));
        restrict_dp(&mut region, &trace, self.line, self.pen)?;
        Ok((init, region))
    }
}

/// Snaps `z` into `region` when it lies within [`SNAP_TOLERANCE`] outside; errors when farther.
pub fn snap_into(region: &IntervalUnion, z: f64) -> Result<IntervalUnion> {
    let gap = region.distance(z);
    if gap == 0.0 {
        return Ok(region.clone());
    }
    if gap <= SNAP_TOLERANCE {
        warn!("observed statistic lies {gap:e} outside its region; snapping");
        return Ok(region.union(&IntervalUnion::from_intervals(vec![Interval::new(z - gap, z + gap)])));
    }
    Err(Error::Inconsistent(format!("z = {z} lies {gap:e} outside the region of its own run")))
}
