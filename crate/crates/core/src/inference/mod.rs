//! Selective p-values for detected change-point locations, plus the reference p-values.

mod hypothesis;
mod search;

pub use hypothesis::{
    build_hypothesis, decompose, mean_differences, project, projection_matrix, test_statistic, FrequencyContext,
    HypothesisContext, LineDecomposition,
};
pub use search::{
    parametric_search, snap_into, DpOnlyAlgorithm, FullAlgorithm, LineAlgorithm, SearchOutcome, MERGE_TOLERANCE,
    SNAP_TOLERANCE, STEP,
};

use serde::{Deserialize, Serialize};

use crate::chi::{chi_ln_sf, chi_upper_quantile, truncated_chi_sf};
use crate::detect::{DetectConfig, Detection};
use crate::dp::{initial_configuration, restrict_dp};
use crate::error::{Error, Result};
use crate::interval::IntervalUnion;
use crate::objective::LineCache;
use crate::spectral::{num_frequencies, TimeSeries};

/// Unconditional χ_df survival at `z`.
pub fn naive_p(z: f64, df: f64) -> f64 {
    chi_ln_sf(z, df).exp().clamp(0.0, 1.0)
}

/// `min(1, m p)` with `m = (2^D - 1)(T - 1)`, in log space.
pub fn bonferroni_p(p_naive: f64, frequencies: usize, windows: usize) -> f64 {
    if p_naive <= 0.0 {
        return 0.0;
    }
    let d = frequencies as f64;
    let ln_m = d * std::f64::consts::LN_2 + (-(-d * std::f64::consts::LN_2).exp()).ln_1p() + ((windows - 1) as f64).ln();
    (p_naive.ln() + ln_m).exp().min(1.0)
}

/// Truncated survival over a region that should contain `z`.
pub fn oc_p(z: f64, df: f64, region: &IntervalUnion) -> Result<f64> {
    truncated_chi_sf(z, df, &snap_into(region, z)?)
}

/// Upper end of the searched part of the line.
pub fn search_limit(z_obs: f64, df: f64) -> f64 {
    (z_obs + 10.0).max(chi_upper_quantile(1e-12, df))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceOptions {
    /// Noise standard deviation used by the test; defaults to `sqrt(sigma2)` of the detector.
    pub sigma: Option<f64>,
    /// Also compute the two references conditioned on optimal partitioning alone.
    pub dp_baselines: bool,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self { sigma: None, dp_baselines: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub tau: usize,
    pub frequencies: Vec<usize>,
    pub df: f64,
    pub z_obs: f64,
    /// Truncation region of the selective test.
    pub region: IntervalUnion,
    pub oc_region: IntervalUnion,
    pub p_selective: f64,
    pub p_oc: f64,
    pub p_naive: f64,
    pub p_bonferroni: f64,
    pub p_dp_only: Option<f64>,
    pub p_dp_only_oc: Option<f64>,
    /// False when the test could not be carried out; all p-values are then 1.
    pub valid: bool,
    pub diagnostic: Option<String>,
    pub probes: usize,
    pub stalls: usize,
}

impl TestResult {
    fn invalid(tau: usize, frequencies: Vec<usize>, df: f64, z_obs: f64, why: String) -> Self {
        Self {
            tau,
            frequencies,
            df,
            z_obs,
            region: IntervalUnion::empty(),
            oc_region: IntervalUnion::empty(),
            p_selective: 1.0,
            p_oc: 1.0,
            p_naive: 1.0,
            p_bonferroni: 1.0,
            p_dp_only: None,
            p_dp_only_oc: None,
            valid: false,
            diagnostic: Some(why),
            probes: 0,
            stalls: 0,
        }
    }
}

/// Tests the detected location `tau` of `det`, which must come from `detect(x, config)`.
///
/// Degenerate statistics, empty regions and zero-mass regions yield an invalid
/// result rather than an error.
pub fn test_location(
    x: &TimeSeries,
    det: &Detection,
    tau: usize,
    config: &DetectConfig,
    opts: &InferenceOptions,
) -> Result<TestResult> {
    let m = config.window_size;
    let ctx = build_hypothesis(&det.config, tau, m)?;
    let sigma = opts.sigma.unwrap_or(config.sigma2.sqrt());
    match run_test(x, det, &ctx, config, sigma, opts) {
        Ok(r) => Ok(r),
        Err(e @ (Error::DegenerateStatistic | Error::ZeroMass { .. } | Error::Inconsistent(_))) => {
            let z = test_statistic(x, &ctx, sigma).unwrap_or(0.0);
            Ok(TestResult::invalid(tau, ctx.frequency_set(), ctx.df, z, e.to_string()))
        }
        Err(e) => Err(e),
    }
}

/// Tests every detected location.
pub fn test_all(x: &TimeSeries, det: &Detection, config: &DetectConfig, opts: &InferenceOptions) -> Result<Vec<TestResult>> {
    det.locations().into_iter().map(|tau| test_location(x, det, tau, config, opts)).collect()
}

fn run_test(
    x: &TimeSeries,
    det: &Detection,
    ctx: &HypothesisContext,
    config: &DetectConfig,
    sigma: f64,
    opts: &InferenceOptions,
) -> Result<TestResult> {
    let m = config.window_size;
    let t = ctx.windows;
    let line_parts = decompose(x, ctx, sigma)?;
    let z_obs = line_parts.z_obs;
    let line = LineCache::new(&line_parts.a, &line_parts.b, m)?;
    let pen = config.penalties(t)?;
    let params = config.sa_params();
    let z_max = search_limit(z_obs, ctx.df);

    let full = FullAlgorithm { line: &line, pen: &pen, params: &params, z_max };
    let (replayed, observed) = full.run_detailed(z_obs)?;
    if replayed.config != det.config {
        return Err(Error::Inconsistent(format!(
            "replay on the line at z = {z_obs} does not reproduce the detection"
        )));
    }
    let observed = snap_into(&observed, z_obs)?;
    let outcome = parametric_search(&full, &det.config, &observed, z_max)?;
    let region = snap_into(&outcome.region, z_obs)?;

    let p_selective = truncated_chi_sf(z_obs, ctx.df, &region)?;
    let p_oc = truncated_chi_sf(z_obs, ctx.df, &observed)?;
    let p_naive = naive_p(z_obs, ctx.df);
    let p_bonferroni = bonferroni_p(p_naive, num_frequencies(m), t);

    let (mut p_dp_only, mut p_dp_only_oc) = (None, None);
    if opts.dp_baselines {
        let dp = DpOnlyAlgorithm { line: &line, pen: &pen, z_max };
        let (init, _, trace) = initial_configuration(&line.at(z_obs), &pen)?;
        let mut dp_region = IntervalUnion::single(0.0, z_max);
        restrict_dp(&mut dp_region, &trace, &line, &pen)?;
        let dp_region = snap_into(&dp_region, z_obs)?;
        p_dp_only_oc = Some(truncated_chi_sf(z_obs, ctx.df, &dp_region)?);
        let dp_search = parametric_search(&dp, &init, &dp_region, z_max)?;
        p_dp_only = Some(truncated_chi_sf(z_obs, ctx.df, &snap_into(&dp_search.region, z_obs)?)?);
    }

    Ok(TestResult {
        tau: ctx.tau,
        frequencies: ctx.frequency_set(),
        df: ctx.df,
        z_obs,
        region,
        oc_region: observed,
        p_selective,
        p_oc,
        p_naive,
        p_bonferroni,
        p_dp_only,
        p_dp_only_oc,
        valid: true,
        diagnostic: None,
        probes: outcome.probes,
        stalls: outcome.stalls,
    })
}
