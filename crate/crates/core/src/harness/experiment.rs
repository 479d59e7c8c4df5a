//! Monte Carlo experiments: type-I error under the null and conditional power.
//!
//! Every trial owns a ChaCha8 stream derived from the master seed, so trials can
//! run in any order and the report only depends on the configuration.

use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{binomial_acceptance, clopper_pearson, ks_uniform, spearman, KsResult};
use super::synth::{default_change_windows, draw_spec, generate, is_correct_detection, NoiseKind, PlantedFrequency};
use super::variance::estimate_variance;
use crate::detect::{detect, DetectConfig};
use crate::error::{domain, Result};
use crate::inference::{build_hypothesis, test_location, InferenceOptions, TestResult};

pub const SCHEMA_VERSION: u32 = 1;

/// How the noise level used by detection and testing is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// The generating σ.
    #[default]
    Known,
    /// Plug-in estimate from [`estimate_variance`], used for both detection and testing.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Detector settings; `sigma2` is replaced by the variance the mode prescribes.
    pub detect: DetectConfig,
    pub windows: usize,
    pub sigma: f64,
    pub alpha: f64,
    /// Type-I: number of tested locations to collect. Power: generated sequences per grid point.
    pub trials: usize,
    /// Type-I: cap on generated sequences, as a multiple of `trials`.
    pub max_attempts_factor: usize,
    pub master_seed: u64,
    pub noise: NoiseKind,
    pub variance: VarianceMode,
    pub planted: usize,
    pub deltas: Vec<f64>,
    /// Penalty weights to sweep; empty means only `detect.kappa`.
    pub kappas: Vec<f64>,
    pub dp_baselines: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            detect: DetectConfig { window_size: 8, ..DetectConfig::default() },
            windows: 30,
            sigma: 1.0,
            alpha: 0.05,
            trials: 200,
            max_attempts_factor: 20,
            master_seed: 0,
            noise: NoiseKind::Iid,
            variance: VarianceMode::Known,
            planted: 3,
            deltas: vec![0.3, 0.6, 0.9],
            kappas: Vec::new(),
            dp_baselines: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.detect.validate()?;
        if self.windows < 2 {
            return Err(domain("experiments need at least two windows"));
        }
        if !(self.sigma > 0.0) {
            return Err(domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let NoiseKind::Ar { rho } = self.noise {
            if !(0.0..1.0).contains(&rho) {
                return Err(domain(format!("rho must lie in [0, 1), got {rho}")));
            }
        }
        if self.deltas.iter().any(|d| !(*d >= 0.0)) || self.kappas.iter().any(|k| !(*k >= 0.0)) {
            return Err(domain("deltas and kappas must be nonnegative"));
        }
        Ok(())
    }

    fn kappa_grid(&self) -> Vec<f64> {
        if self.kappas.is_empty() {
            vec![self.detect.kappa]
        } else {
            self.kappas.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TypeI,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Selective,
    Oc,
    Naive,
    Bonferroni,
    DpOnly,
    DpOnlyOc,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Selective, Method::Oc, Method::Naive, Method::Bonferroni, Method::DpOnly, Method::DpOnlyOc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Selective => "selective",
            Method::Oc => "oc",
            Method::Naive => "naive",
            Method::Bonferroni => "bonferroni",
            Method::DpOnly => "dp_only",
            Method::DpOnlyOc => "dp_only_oc",
        }
    }
}

/// One generated sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub grid_index: usize,
    pub trial: usize,
    pub delta: f64,
    pub kappa: f64,
    /// ChaCha8 stream of the trial (the master seed selects the key).
    pub stream: u64,
    pub sa_seed: u64,
    pub planted: Vec<PlantedFrequency>,
    pub sigma_used: f64,
    /// Detected change points per frequency.
    pub detected: Vec<Vec<usize>>,
    pub tested: Option<usize>,
    pub tested_frequencies: Vec<usize>,
    /// Power runs: whether the drawn location is a correct detection.
    pub correct: Option<bool>,
    pub valid: Option<bool>,
    pub diagnostic: Option<String>,
    pub z_obs: Option<f64>,
    pub df: Option<f64>,
    pub p_selective: Option<f64>,
    pub p_oc: Option<f64>,
    pub p_naive: Option<f64>,
    pub p_bonferroni: Option<f64>,
    pub p_dp_only: Option<f64>,
    pub p_dp_only_oc: Option<f64>,
    /// Detector runs of the line search, and runs that did not reproduce themselves.
    pub probes: usize,
    pub stalls: usize,
    pub wall_ms: f64,
}

impl TrialRecord {
    pub fn p_value(&self, method: Method) -> Option<f64> {
        match method {
            Method::Selective => self.p_selective,
            Method::Oc => self.p_oc,
            Method::Naive => self.p_naive,
            Method::Bonferroni => self.p_bonferroni,
            Method::DpOnly => self.p_dp_only,
            Method::DpOnlyOc => self.p_dp_only_oc,
        }
    }

    /// Counts towards the rates: a valid test of a location (correct, for power runs).
    pub fn counts(&self) -> bool {
        self.valid == Some(true) && self.correct != Some(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub tested: usize,
    pub rejections: usize,
    pub rate: f64,
    /// Clopper–Pearson 95% interval of the rate.
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub grid_index: usize,
    pub delta: f64,
    pub kappa: f64,
    pub attempts: usize,
    pub with_detections: usize,
    pub correct: usize,
    pub invalid: usize,
    pub methods: Vec<MethodSummary>,
    /// Uniformity of the counted selective p-values.
    pub ks: Option<KsResult>,
    /// Central 95% interval of the rejection rate of a level-α test over the counted tests.
    pub acceptance: (f64, f64),
}

impl GridSummary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

/// Spearman correlation between Δ and power, per method and κ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub kappa: f64,
    pub method: Method,
    pub spearman: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub grid: Vec<GridSummary>,
    pub trends: Vec<Trend>,
    pub trials: Vec<TrialRecord>,
    pub elapsed_seconds: f64,
}

impl ExperimentReport {
    /// Copy with timing fields zeroed; two runs of one configuration agree on this.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.elapsed_seconds = 0.0;
        for t in &mut r.trials {
            t.wall_ms = 0.0;
        }
        r
    }
}

/// Rates and intervals for one grid point from its trial records.
pub fn summarize(grid_index: usize, delta: f64, kappa: f64, records: &[&TrialRecord], alpha: f64) -> GridSummary {
    let counted: Vec<&&TrialRecord> = records.iter().filter(|r| r.counts()).collect();
    let methods = Method::ALL
        .iter()
        .filter_map(|&m| {
            let ps: Vec<f64> = counted.iter().filter_map(|r| r.p_value(m)).collect();
            if ps.is_empty() && m != Method::Selective {
                return None;
            }
            let rejections = ps.iter().filter(|&&p| p <= alpha).count();
            let rate = if ps.is_empty() { 0.0 } else { rejections as f64 / ps.len() as f64 };
            Some(MethodSummary { method: m, tested: ps.len(), rejections, rate, ci: clopper_pearson(rejections, ps.len(), 0.95) })
        })
        .collect();
    let selective: Vec<f64> = counted.iter().filter_map(|r| r.p_selective).collect();
    GridSummary {
        grid_index,
        delta,
        kappa,
        attempts: records.len(),
        with_detections: records.iter().filter(|r| r.detected.iter().any(|s| !s.is_empty())).count(),
        correct: records.iter().filter(|r| r.correct == Some(true)).count(),
        invalid: records.iter().filter(|r| r.valid == Some(false)).count(),
        methods,
        ks: ks_uniform(&selective),
        acceptance: binomial_acceptance(selective.len(), alpha, 0.95),
    }
}

fn trial_rng(master: u64, grid_index: usize, trial: usize) -> (ChaCha8Rng, u64) {
    let stream = ((grid_index as u64) << 32) | trial as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    (rng, stream)
}

/// Generates, detects, draws one detected location uniformly and tests it.
/// Power runs (`delta > 0`) test the location only when it is a correct detection.
pub fn run_trial(cfg: &ExperimentConfig, grid_index: usize, delta: f64, kappa: f64, trial: usize) -> Result<TrialRecord> {
    let start = Instant::now();
    let (mut rng, stream) = trial_rng(cfg.master_seed, grid_index, trial);
    let m = cfg.detect.window_size;
    let spec = draw_spec(
        m,
        cfg.windows,
        cfg.sigma,
        delta,
        cfg.noise,
        cfg.planted,
        &default_change_windows(cfg.windows),
        &mut rng,
    )?;
    let x = generate(&spec, &mut rng)?;
    let sa_seed: u64 = rng.random();
    let mut detect_cfg = DetectConfig { kappa, seed: sa_seed, sigma2: cfg.sigma * cfg.sigma, ..cfg.detect.clone() };
    if cfg.variance == VarianceMode::Estimated {
        let pilot = DetectConfig { sigma2: cfg.detect.sigma2, ..detect_cfg.clone() };
        let s = estimate_variance(&x, &pilot)?;
        detect_cfg.sigma2 = s * s;
    }
    let mut rec = TrialRecord {
        grid_index,
        trial,
        delta,
        kappa,
        stream,
        sa_seed,
        planted: spec.planted.clone(),
        sigma_used: detect_cfg.sigma2.sqrt(),
        detected: Vec::new(),
        tested: None,
        tested_frequencies: Vec::new(),
        correct: None,
        valid: None,
        diagnostic: None,
        z_obs: None,
        df: None,
        p_selective: None,
        p_oc: None,
        p_naive: None,
        p_bonferroni: None,
        p_dp_only: None,
        p_dp_only_oc: None,
        probes: 0,
        stalls: 0,
        wall_ms: 0.0,
    };
    if !(detect_cfg.sigma2 > 0.0) {
        rec.diagnostic = Some("estimated noise level is zero".into());
        rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        return Ok(rec);
    }
    let det = detect(&x, &detect_cfg)?;
    rec.detected = det.config.per_frequency().to_vec();
    let locations = det.locations();
    if !locations.is_empty() {
        let tau = locations[rng.random_range(0..locations.len())];
        rec.tested = Some(tau);
        let ctx = build_hypothesis(&det.config, tau, m)?;
        rec.tested_frequencies = ctx.frequency_set();
        if delta > 0.0 {
            rec.correct = Some(is_correct_detection(&ctx, &spec));
        }
        if rec.correct != Some(false) {
            let opts = InferenceOptions { sigma: None, dp_baselines: cfg.dp_baselines };
            fill(&mut rec, test_location(&x, &det, tau, &detect_cfg, &opts)?);
        }
    }
    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(rec)
}

fn fill(rec: &mut TrialRecord, r: TestResult) {
    rec.valid = Some(r.valid);
    rec.diagnostic = r.diagnostic;
    rec.z_obs = Some(r.z_obs);
    rec.df = Some(r.df);
    rec.p_selective = Some(r.p_selective);
    rec.p_oc = Some(r.p_oc);
    rec.p_naive = Some(r.p_naive);
    rec.p_bonferroni = Some(r.p_bonferroni);
    rec.p_dp_only = r.p_dp_only;
    rec.p_dp_only_oc = r.p_dp_only_oc;
    rec.probes = r.probes;
    rec.stalls = r.stalls;
}

/// Null sequences (Δ = 0) until `trials` locations have been validly tested, for each κ.
pub fn run_type1(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let max_attempts = cfg.trials.saturating_mul(cfg.max_attempts_factor.max(1));
    let mut trials = Vec::new();
    let mut grid = Vec::new();
    for (gi, kappa) in cfg.kappa_grid().into_iter().enumerate() {
        let mut records: Vec<TrialRecord> = Vec::new();
        let mut counted = 0;
        while counted < cfg.trials && records.len() < max_attempts {
            let next = records.len();
            let batch = (cfg.trials - counted).min(max_attempts - next);
            let fresh: Vec<TrialRecord> = (next..next + batch)
                .into_par_iter()
                .map(|i| run_trial(cfg, gi, 0.0, kappa, i))
                .collect::<Result<_>>()?;
            // Keep trials in index order up to the one completing the target.
            for r in fresh {
                if counted == cfg.trials {
                    break;
                }
                counted += usize::from(r.counts());
                records.push(r);
            }
        }
        if counted < cfg.trials {
            log::warn!("type-I run for kappa = {kappa} stopped at {max_attempts} sequences with {counted} tests");
        }
        grid.push(summarize(gi, 0.0, kappa, &records.iter().collect::<Vec<_>>(), cfg.alpha));
        trials.extend(records);
    }
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        kind: ExperimentKind::TypeI,
        config: cfg.clone(),
        grid,
        trends: Vec::new(),
        trials,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// `trials` sequences per (Δ, κ); conditional power over correctly detected locations.
pub fn run_power(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if cfg.deltas.iter().any(|&d| d <= 0.0) {
        return Err(domain("power runs need positive deltas"));
    }
    let start = Instant::now();
    let points: Vec<(f64, f64)> =
        cfg.kappa_grid().into_iter().flat_map(|k| cfg.deltas.iter().map(move |&d| (d, k))).collect();
    let mut trials = Vec::new();
    let mut grid = Vec::new();
    for (gi, &(delta, kappa)) in points.iter().enumerate() {
        let records: Vec<TrialRecord> = (0..cfg.trials)
            .into_par_iter()
            .map(|i| run_trial(cfg, gi, delta, kappa, i))
            .collect::<Result<_>>()?;
        grid.push(summarize(gi, delta, kappa, &records.iter().collect::<Vec<_>>(), cfg.alpha));
        trials.extend(records);
    }
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        kind: ExperimentKind::Power,
        config: cfg.clone(),
        trends: trends(&grid),
        grid,
        trials,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

fn trends(grid: &[GridSummary]) -> Vec<Trend> {
    let mut kappas: Vec<f64> = grid.iter().map(|g| g.kappa).collect();
    kappas.dedup();
    let mut out = Vec::new();
    for kappa in kappas {
        let rows: Vec<&GridSummary> = grid.iter().filter(|g| g.kappa == kappa).collect();
        for m in Method::ALL {
            let pairs: Vec<(f64, f64)> = rows.iter().filter_map(|g| g.method(m).map(|s| (g.delta, s.rate))).collect();
            if pairs.len() < 2 {
                continue;
            }
            let (d, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            out.push(Trend { kappa, method: m, spearman: spearman(&d, &p) });
        }
    }
    out
}

/// Per-trial rows as CSV (nested fields flattened with `;`).
pub fn write_trials_csv<W: std::io::Write>(out: W, trials: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| crate::Error::Io(std::io::Error::other(e));
    let header = [
        "grid_index", "trial", "delta", "kappa", "stream", "sa_seed", "sigma_used", "planted", "detected", "tested",
        "tested_frequencies", "correct", "valid", "z_obs", "df", "p_selective", "p_oc", "p_naive", "p_bonferroni",
        "p_dp_only", "p_dp_only_oc", "probes", "stalls", "wall_ms", "diagnostic",
    ];
    w.write_record(header).map_err(map)?;
    let opt = |v: Option<f64>| v.map(|p| format!("{p:?}")).unwrap_or_default();
    let join = |v: &[usize]| v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ");
    for t in trials {
        let planted = t.planted.iter().map(|p| format!("{}:{}:{}:{}", p.d, p.amplitude, p.t1, p.t2)).collect::<Vec<_>>();
        let detected = t.detected.iter().map(|s| join(s)).collect::<Vec<_>>();
        w.write_record([
            t.grid_index.to_string(),
            t.trial.to_string(),
            format!("{:?}", t.delta),
            format!("{:?}", t.kappa),
            t.stream.to_string(),
            t.sa_seed.to_string(),
            format!("{:?}", t.sigma_used),
            planted.join(";"),
            detected.join(";"),
            t.tested.map(|v| v.to_string()).unwrap_or_default(),
            join(&t.tested_frequencies),
            t.correct.map(|v| v.to_string()).unwrap_or_default(),
            t.valid.map(|v| v.to_string()).unwrap_or_default(),
            opt(t.z_obs),
            opt(t.df),
            opt(t.p_selective),
            opt(t.p_oc),
            opt(t.p_naive),
            opt(t.p_bonferroni),
            opt(t.p_dp_only),
            opt(t.p_dp_only_oc),
            t.probes.to_string(),
            t.stalls.to_string(),
            format!("{:.3}", t.wall_ms),
            t.diagnostic.clone().unwrap_or_default(),
        ])
        .map_err(map)?;
    }
    w.flush()?;
    Ok(())
}
