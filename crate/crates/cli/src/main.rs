//! Command-line front-end for equilibrium-tracking experiments.
//!
//! Exit codes: 0 success, 1 bound validation failed, 2 config error,
//! 3 math precondition violated, 4 I/O or artifact error.

mod config;
mod runner;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Overrides};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Math(eqtrack::Error),
    Io(String),
}

impl From<eqtrack::Error> for CliError {
    fn from(e: eqtrack::Error) -> Self {
        use eqtrack::Error as E;
        match e {
            E::Io(_) | E::Csv(_) | E::MalformedDemand(_) => CliError::Io(e.to_string()),
            other => CliError::Math(other),
        }
    }
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Math(_) => "math-precondition",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(m) | CliError::Io(m) => m.clone(),
            CliError::Math(e) => e.to_string(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Math(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "eqtrack",
    about = "Online primal-dual equilibrium-tracking experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file and write CSV/JSON artifacts.
    Run(RunArgs),
    /// Check a finished run's empirical errors against its bound columns.
    ValidateBounds(ValidateArgs),
    /// Generate a synthetic demand CSV.
    GenDemand(GenDemandArgs),
    /// Print the stream constants (gamma, L, epsilon, caps) for a config.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides config and EQTRACK_OUT_DIR).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ValidateArgs {
    /// Directory holding manifest.json and aggregated.csv.
    #[arg(long)]
    run_dir: PathBuf,
}

#[derive(Args)]
struct GenDemandArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 365)]
    days: usize,
    #[arg(long, default_value_t = 6)]
    ports: u32,
    #[arg(long, default_value_t = 8)]
    events: u32,
    #[arg(long, default_value_t = 150.0)]
    power: f64,
    #[arg(long, default_value_t = 5.0)]
    noise: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    config: PathBuf,
    /// Include the full per-step (gamma, L, epsilon, eta_cap) table.
    #[arg(long)]
    per_step: bool,
    #[command(flatten)]
    overrides: Overrides,
}

fn cmd_run(args: RunArgs) -> Result<u8, CliError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    args.overrides.apply(&mut config);
    config.validate()?;
    let out_dir = config.resolve_out_dir(args.out_dir, &args.config);
    let manifest = runner::run_in_pool(&config, &out_dir)?;
    println!(
        "wrote {} ({} steps, {} replication(s), alpha = {:.6}, eta cap = {:.6})",
        out_dir.display(),
        manifest.horizon,
        manifest.replications,
        manifest.constants.alpha,
        manifest.constants.eta_cap,
    );
    Ok(0)
}

fn cmd_validate(args: ValidateArgs) -> Result<u8, CliError> {
    let report = validate::validate(&args.run_dir)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    println!("{json}");
    Ok(if report.pass { 0 } else { 1 })
}

fn cmd_gen_demand(args: GenDemandArgs) -> Result<u8, CliError> {
    let station = eqtrack::market::StationSpec::new(args.ports, args.events, args.power);
    let series =
        eqtrack::market::generate_synthetic_demand(&station, args.days, args.noise, args.seed)?;
    series.save(&args.out)?;
    println!(
        "wrote {} ({} days x {} minutes)",
        args.out.display(),
        series.days(),
        series.minutes_per_day()
    );
    Ok(0)
}

fn cmd_inspect(args: InspectArgs) -> Result<u8, CliError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    args.overrides.apply(&mut config);
    config.validate()?;
    let inspection = runner::inspect(&config, args.per_step)?;
    let json =
        serde_json::to_string_pretty(&inspection).map_err(|e| CliError::Io(e.to_string()))?;
    println!("{json}");
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::ValidateBounds(args) => cmd_validate(args),
        Command::GenDemand(args) => cmd_gen_demand(args),
        Command::Inspect(args) => cmd_inspect(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            let payload = serde_json::json!({
                "error": err.kind(),
                "message": err.message(),
            });
            eprintln!("{payload}");
            ExitCode::from(err.exit_code())
        }
    }
}
