//! The full detector: STFT, per-frequency optimal partitioning, then annealing.

use serde::{Deserialize, Serialize};

use crate::dp::{initial_configuration, DpTrace};
use crate::error::{domain, Result};
use crate::objective::{CpConfiguration, PenaltyParams, SegmentCache, SegmentCosts};
use crate::sa::{anneal, SaParams, SaTrace};
use crate::spectral::{stft, TimeSeries};

/// Detector settings; the field names are the configuration file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub window_size: usize,
    pub sigma2: f64,
    pub kappa: f64,
    pub c0_plus: f64,
    pub lambda_plus: f64,
    pub target_eta: f64,
    pub lambda: f64,
    pub seed: u64,
    pub max_temperature_levels: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        let sa = SaParams::default();
        Self {
            window_size: 512,
            sigma2: 1.0,
            kappa: 0.5,
            c0_plus: sa.c0_plus,
            lambda_plus: sa.lambda_plus,
            target_eta: sa.target_eta,
            lambda: sa.lambda,
            seed: sa.seed,
            max_temperature_levels: sa.max_temperature_levels,
        }
    }
}

impl DetectConfig {
    pub fn sa_params(&self) -> SaParams {
        SaParams {
            c0_plus: self.c0_plus,
            lambda_plus: self.lambda_plus,
            target_eta: self.target_eta,
            lambda: self.lambda,
            seed: self.seed,
            max_temperature_levels: self.max_temperature_levels,
        }
    }

    pub fn penalties(&self, windows: usize) -> Result<PenaltyParams> {
        PenaltyParams::bic(self.window_size, self.sigma2, windows, self.kappa)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 {
            return Err(domain(format!("window_size must be at least 2, got {}", self.window_size)));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(domain(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if !(self.kappa >= 0.0) {
            return Err(domain(format!("kappa must be non-negative, got {}", self.kappa)));
        }
        self.sa_params().validate()
    }
}

/// Output of one detector run with everything needed to condition on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub config: CpConfiguration,
    pub initial: CpConfiguration,
    /// Frequencies with at least one change point after optimal partitioning.
    pub active: Vec<usize>,
    pub dp: DpTrace,
    pub sa: SaTrace,
    pub objective: f64,
}

impl Detection {
    /// Sorted distinct change-point locations.
    pub fn locations(&self) -> Vec<usize> {
        self.config.union()
    }
}

/// Runs optimal partitioning and annealing on an arbitrary cost table.
pub fn run_algorithm<C: SegmentCosts>(costs: &C, pen: &PenaltyParams, params: &SaParams) -> Result<Detection> {
    let (initial, active, dp) = initial_configuration(costs, pen)?;
    let annealed = anneal(costs, &initial, &active, pen, params)?;
    let objective = objective_from_costs(costs, &annealed.config, pen);
    Ok(Detection { config: annealed.config, initial, active, dp, sa: annealed.trace, objective })
}

pub(crate) fn objective_from_costs<C: SegmentCosts>(costs: &C, cfg: &CpConfiguration, pen: &PenaltyParams) -> f64 {
    let mut total = pen.penalty(cfg);
    for d in 0..cfg.frequencies() {
        for (s, e) in cfg.segments(d) {
            total += costs.cost(d, s, e);
        }
    }
    total
}

/// Detects change points of `x`. Deterministic in `(x, config)`.
pub fn detect(x: &TimeSeries, config: &DetectConfig) -> Result<Detection> {
    config.validate()?;
    let f = stft(x, config.window_size)?;
    let pen = config.penalties(f.windows())?;
    run_algorithm(&SegmentCache::new(&f), &pen, &config.sa_params())
}
