//! Experiment configuration: TOML file plus flag overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use eqtrack::market::MarketSpec;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum ScenarioKind {
    #[default]
    SyntheticStatic,
    SyntheticDrift,
    Market,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum SolverKind {
    Conceptual,
    #[default]
    Stochastic,
}

/// Scalar static scenario: `f = 1/2 x^2 - 1/2 y^2 - w x` with
/// `w ~ N(mu0 + epsilon x, noise_sigma^2)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaticParams {
    pub mu0: f64,
    pub epsilon: f64,
    pub noise_sigma: f64,
    pub half_width: f64,
    /// Starting point `(x, y)`.
    pub z0: [f64; 2],
}

impl Default for StaticParams {
    fn default() -> Self {
        Self {
            mu0: 1.0,
            epsilon: 0.5,
            noise_sigma: 1.0,
            half_width: 10.0,
            z0: [0.0, 0.0],
        }
    }
}

/// Scalar drifting scenario: `mu0(t) = mu0 + amplitude sin(2 pi t / period)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftParams {
    pub mu0: f64,
    pub amplitude: f64,
    pub period: f64,
    pub epsilon: f64,
    pub noise_sigma: f64,
    pub half_width: f64,
    pub z0: [f64; 2],
}

impl Default for DriftParams {
    fn default() -> Self {
        Self {
            mu0: 0.0,
            amplitude: 1.0,
            period: 100.0,
            epsilon: 0.5,
            noise_sigma: 0.1,
            half_width: 10.0,
            z0: [0.0, 0.0],
        }
    }
}

/// Charging-market scenario. Demand comes from CSV files when paths are
/// given, otherwise from the seeded synthetic generator.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketParams {
    pub day: usize,
    pub noise_sigma: f64,
    /// Starting point: `z0_offset` in every price coordinate.
    pub z0_offset: f64,
    pub demand1: Option<PathBuf>,
    pub demand2: Option<PathBuf>,
    pub synthetic_days: usize,
    pub synthetic_noise: f64,
    pub synthetic_seed: u64,
    pub spec: MarketSpec,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            day: 100,
            noise_sigma: 0.05,
            z0_offset: 4.0,
            demand1: None,
            demand2: None,
            synthetic_days: 365,
            synthetic_noise: 5.0,
            synthetic_seed: 7,
            spec: MarketSpec::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    pub solver: SolverKind,
    pub eta: f64,
    pub batch_size: usize,
    /// Steps to simulate; 0 means the scenario's natural length (the whole
    /// demand day for the market scenario).
    pub horizon: usize,
    pub replications: usize,
    /// Failure probabilities for the high-probability bound columns.
    pub deltas: Vec<f64>,
    pub seed: u64,
    pub theta_grid: Vec<f64>,
    pub enforce_cap: bool,
    pub oracle_max_iters: usize,
    pub oracle_tolerance: f64,
    /// Cap on per-replication trajectory CSVs written to disk.
    pub max_saved_trajectories: usize,
    /// Worker threads for the replication fan-out; 0 = rayon default.
    pub threads: usize,
    pub out_dir: Option<PathBuf>,
    #[serde(rename = "static")]
    pub static_params: StaticParams,
    pub drift: DriftParams,
    pub market: MarketParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::default(),
            solver: SolverKind::default(),
            eta: 0.1,
            batch_size: 1,
            horizon: 500,
            replications: 100,
            deltas: vec![0.1, 0.05, 0.01],
            seed: 42,
            theta_grid: eqtrack::subweibull::DEFAULT_THETA_GRID.to_vec(),
            enforce_cap: true,
            oracle_max_iters: 100_000,
            oracle_tolerance: 1e-10,
            max_saved_trajectories: 16,
            threads: 0,
            out_dir: None,
            static_params: StaticParams::default(),
            drift: DriftParams::default(),
            market: MarketParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let config: Self = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("cannot parse config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.eta <= 0.0 || !self.eta.is_finite() {
            return Err(CliError::Config("eta must be positive".into()));
        }
        if self.replications == 0 {
            return Err(CliError::Config("replications must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(CliError::Config("batch_size must be at least 1".into()));
        }
        if self
            .deltas
            .iter()
            .any(|d| *d <= 0.0 || *d >= 1.0 || d.is_nan())
        {
            return Err(CliError::Config("deltas must lie in (0, 1)".into()));
        }
        if self.scenario != ScenarioKind::Market && self.horizon == 0 {
            return Err(CliError::Config(
                "horizon must be at least 1 for synthetic scenarios".into(),
            ));
        }
        if self.scenario == ScenarioKind::Market
            && self.market.z0_offset.abs() > self.market.spec.price_bound
        {
            return Err(CliError::Config(
                "market z0_offset must lie inside the price box".into(),
            ));
        }
        Ok(())
    }

    /// Output directory precedence: --out-dir flag, config `out_dir`,
    /// `EQTRACK_OUT_DIR/<config stem>`, then `runs/<config stem>`.
    pub fn resolve_out_dir(&self, flag: Option<PathBuf>, config_path: &Path) -> PathBuf {
        let stem = config_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "experiment".into());
        flag.or_else(|| self.out_dir.clone())
            .or_else(|| {
                std::env::var_os("EQTRACK_OUT_DIR").map(|base| PathBuf::from(base).join(&stem))
            })
            .unwrap_or_else(|| PathBuf::from("runs").join(&stem))
    }
}

/// Flag-level overrides applied on top of the config file.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(v) = self.eta {
            config.eta = v;
        }
        if let Some(v) = self.horizon {
            config.horizon = v;
        }
        if let Some(v) = self.replications {
            config.replications = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.solver {
            config.solver = v;
        }
        if let Some(v) = self.threads {
            config.threads = v;
        }
    }
}
