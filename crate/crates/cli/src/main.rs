use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use freqsi::detect::{detect, DetectConfig, Detection};
use freqsi::harness::experiment::{run_power, run_type1, write_trials_csv, ExperimentConfig, ExperimentReport, VarianceMode};
use freqsi::harness::io::{read_signal_file, write_signal};
use freqsi::harness::synth::{default_change_windows, draw_spec, generate, NoiseKind, SyntheticSpec};
use freqsi::harness::variance::estimate_variance;
use freqsi::inference::{test_all, InferenceOptions, TestResult};
use freqsi::spectral::TimeSeries;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "freqsi", version, about = "Frequency-wise change points with selective p-values")]
struct Cli {
    /// TOML file with optional [detect] and [experiment] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Annealer seed (detect, test) or master seed (simulations, generate).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Significance level.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Write JSON here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect change points in a single-column CSV signal.
    Detect(SignalArgs),
    /// Detect, then test every detected location.
    Test {
        #[command(flatten)]
        signal: SignalArgs,
        /// Noise standard deviation for the test (defaults to sqrt(sigma2)).
        #[arg(long)]
        sigma: Option<f64>,
        /// Skip the optimal-partitioning-only reference p-values.
        #[arg(long)]
        no_dp_baselines: bool,
    },
    /// Estimate the noise standard deviation of a signal.
    EstimateVariance(SignalArgs),
    /// Type-I error experiment on null sequences.
    SimulateType1(SimArgs),
    /// Conditional power experiment over a grid of change sizes.
    SimulatePower {
        #[command(flatten)]
        sim: SimArgs,
        /// Comma-separated change sizes.
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
    },
    /// Write a synthetic signal as CSV.
    Generate {
        #[arg(long, default_value_t = 8)]
        window_size: usize,
        #[arg(long, default_value_t = 30)]
        windows: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 3)]
        planted: usize,
        #[arg(long)]
        rho: Option<f64>,
        /// Also write the drawn specification as JSON here.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SignalArgs {
    /// Input CSV (one sample per row, optional header).
    input: PathBuf,
    #[arg(long)]
    window_size: Option<usize>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Sampling rate in Hz (metadata only).
    #[arg(long, default_value_t = 1.0)]
    sampling_rate: f64,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    window_size: Option<usize>,
    #[arg(long)]
    windows: Option<usize>,
    /// AR(1) noise correlation.
    #[arg(long)]
    rho: Option<f64>,
    /// Estimate the noise level from each sequence instead of using the true one.
    #[arg(long)]
    estimated_variance: bool,
    /// Comma-separated penalty weights to sweep.
    #[arg(long, value_delimiter = ',')]
    kappas: Option<Vec<f64>>,
    /// Per-trial CSV (default: next to --output with a .trials.csv suffix).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    detect: Option<DetectConfig>,
    experiment: Option<ExperimentConfig>,
}

#[derive(Serialize)]
struct DetectOutput<'a> {
    schema_version: u32,
    samples: usize,
    sampling_rate: f64,
    config: &'a DetectConfig,
    windows: usize,
    frequencies: usize,
    change_points: &'a [Vec<usize>],
    union: Vec<usize>,
    initial_change_points: &'a [Vec<usize>],
    objective: f64,
    temperature_levels: usize,
}

impl<'a> DetectOutput<'a> {
    fn new(x: &TimeSeries, config: &'a DetectConfig, det: &'a Detection) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            samples: x.len(),
            sampling_rate: x.sampling_rate,
            config,
            windows: det.config.windows(),
            frequencies: det.config.frequencies(),
            change_points: det.config.per_frequency(),
            union: det.config.union(),
            initial_change_points: det.initial.per_frequency(),
            objective: det.objective,
            temperature_levels: det.sa.levels,
        }
    }
}

#[derive(Serialize)]
struct TestOutput<'a> {
    #[serde(flatten)]
    detection: DetectOutput<'a>,
    alpha: f64,
    /// α divided by the number of tested locations.
    per_location_level: f64,
    results: Vec<TestResult>,
    /// Locations whose selective p-value is at most the per-location level.
    significant: Vec<usize>,
}

#[derive(Serialize)]
struct VarianceOutput {
    schema_version: u32,
    window_size: usize,
    sigma_hat: f64,
}

#[derive(Serialize)]
struct GenerateSpec<'a> {
    schema_version: u32,
    seed: u64,
    spec: &'a SyntheticSpec,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<FileConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => FileConfig::default(),
    };
    let alpha = cli.alpha.or(file.experiment.as_ref().map(|e| e.alpha)).unwrap_or(0.05);
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!("--alpha must lie in (0, 1), got {alpha}");
    }
    match cli.command {
        Command::Detect(args) => {
            let (x, config) = load(&args, file.detect, cli.seed)?;
            let det = detect(&x, &config)?;
            emit(cli.output.as_deref(), &DetectOutput::new(&x, &config, &det))
        }
        Command::Test { signal, sigma, no_dp_baselines } => {
            let (x, config) = load(&signal, file.detect, cli.seed)?;
            let det = detect(&x, &config)?;
            let opts = InferenceOptions { sigma, dp_baselines: !no_dp_baselines };
            let results = test_all(&x, &det, &config, &opts)?;
            let level = alpha / results.len().max(1) as f64;
            let significant = results.iter().filter(|r| r.valid && r.p_selective <= level).map(|r| r.tau).collect();
            let out = TestOutput {
                detection: DetectOutput::new(&x, &config, &det),
                alpha,
                per_location_level: level,
                results,
                significant,
            };
            emit(cli.output.as_deref(), &out)
        }
        Command::EstimateVariance(args) => {
            let (x, config) = load(&args, file.detect, cli.seed)?;
            let sigma_hat = estimate_variance(&x, &config)?;
            emit(cli.output.as_deref(), &VarianceOutput { schema_version: SCHEMA_VERSION, window_size: config.window_size, sigma_hat })
        }
        Command::SimulateType1(sim) => {
            let cfg = experiment_config(&sim, file.experiment, cli.seed, alpha, None)?;
            let report = run_type1(&cfg)?;
            write_report(&report, cli.output.as_deref(), sim.csv.as_deref())
        }
        Command::SimulatePower { sim, deltas } => {
            let cfg = experiment_config(&sim, file.experiment, cli.seed, alpha, deltas)?;
            let report = run_power(&cfg)?;
            write_report(&report, cli.output.as_deref(), sim.csv.as_deref())
        }
        Command::Generate { window_size, windows, sigma, delta, planted, rho, spec } => {
            use rand::SeedableRng;
            let seed = cli.seed.unwrap_or(0);
            let noise = rho.map_or(NoiseKind::Iid, |rho| NoiseKind::Ar { rho });
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s = draw_spec(window_size, windows, sigma, delta, noise, planted, &default_change_windows(windows), &mut rng)?;
            let x = generate(&s, &mut rng)?;
            if let Some(p) = spec {
                let text = serde_json::to_string_pretty(&GenerateSpec { schema_version: SCHEMA_VERSION, seed, spec: &s })?;
                fs::write(&p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
            }
            match &cli.output {
                Some(p) => write_signal(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?, &x)?,
                None => write_signal(std::io::stdout().lock(), &x)?,
            }
            Ok(())
        }
    }
}

fn load(args: &SignalArgs, base: Option<DetectConfig>, seed: Option<u64>) -> Result<(TimeSeries, DetectConfig)> {
    let mut config = base.unwrap_or_default();
    if let Some(m) = args.window_size {
        config.window_size = m;
    }
    if let Some(s) = args.sigma2 {
        config.sigma2 = s;
    }
    if let Some(k) = args.kappa {
        config.kappa = k;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    let x = read_signal_file(&args.input, args.sampling_rate).with_context(|| format!("reading {}", args.input.display()))?;
    Ok((x, config))
}

fn experiment_config(
    sim: &SimArgs,
    base: Option<ExperimentConfig>,
    seed: Option<u64>,
    alpha: f64,
    deltas: Option<Vec<f64>>,
) -> Result<ExperimentConfig> {
    let mut cfg = base.unwrap_or_default();
    cfg.alpha = alpha;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(t) = sim.trials {
        cfg.trials = t;
    }
    if let Some(m) = sim.window_size {
        cfg.detect.window_size = m;
    }
    if let Some(t) = sim.windows {
        cfg.windows = t;
    }
    if let Some(rho) = sim.rho {
        cfg.noise = NoiseKind::Ar { rho };
    }
    if sim.estimated_variance {
        cfg.variance = VarianceMode::Estimated;
    }
    if let Some(k) = &sim.kappas {
        cfg.kappas = k.clone();
    }
    if let Some(d) = deltas {
        cfg.deltas = d;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_report(report: &ExperimentReport, output: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    emit(output, report)?;
    let csv_path = csv.map(Path::to_path_buf).or_else(|| output.map(|p| p.with_extension("trials.csv")));
    if let Some(p) = csv_path {
        let f = fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        write_trials_csv(f, &report.trials)?;
    }
    Ok(())
}

fn emit<T: Serialize>(output: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match output {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}")?;
        }
    }
    Ok(())
}
