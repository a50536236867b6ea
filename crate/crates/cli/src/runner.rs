//! The `run` subcommand: build the scenario stream, fan out replications,
//! and write the manifest, trajectory CSVs and the aggregated
//! bound-vs-empirical table.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use eqtrack::market;
use eqtrack::montecarlo::{self, ReplicationSummary};
use eqtrack::problem::{DecisionPoint, ProblemStream};
use eqtrack::scenario;
use eqtrack::solver::{
    equilibrium_sequence, online_primal_dual_with_refs, stream_constants, EquilibriumSequence,
    SolverConfig, StreamConstants, Trajectory,
};
use eqtrack::subweibull::{
    expectation_bound, fit_subweibull, high_probability_bound, BoundInputs, SubWeibullParams,
};

use crate::config::{ExperimentConfig, ScenarioKind, SolverKind};
use crate::CliError;

pub struct Scenario {
    pub stream: ProblemStream,
    pub z0: DecisionPoint,
}

/// Assemble the problem stream and starting point for a config.
pub fn build_scenario(config: &ExperimentConfig) -> Result<Scenario, CliError> {
    let scenario = match config.scenario {
        ScenarioKind::SyntheticStatic => {
            let p = &config.static_params;
            Scenario {
                stream: scenario::scalar_static_stream(
                    p.mu0,
                    p.epsilon,
                    p.noise_sigma,
                    p.half_width,
                    config.horizon,
                )?,
                z0: DecisionPoint::from_slices(&[p.z0[0]], &[p.z0[1]]),
            }
        }
        ScenarioKind::SyntheticDrift => {
            let p = &config.drift;
            Scenario {
                stream: scenario::scalar_drift_stream(
                    p.mu0,
                    p.amplitude,
                    p.period,
                    p.epsilon,
                    p.noise_sigma,
                    p.half_width,
                    config.horizon,
                )?,
                z0: DecisionPoint::from_slices(&[p.z0[0]], &[p.z0[1]]),
            }
        }
        ScenarioKind::Market => {
            let p = &config.market;
            let load =
                |path: &Option<PathBuf>, which: u64| -> Result<market::DemandSeries, CliError> {
                    match path {
                        Some(path) => Ok(market::load_demand(path)?),
                        None => {
                            let station = p
                                .spec
                                .stations_provider1
                                .first()
                                .copied()
                                .unwrap_or(market::StationSpec::new(6, 8, 150.0));
                            Ok(market::generate_synthetic_demand(
                                &station,
                                p.synthetic_days,
                                p.synthetic_noise,
                                p.synthetic_seed.wrapping_add(which),
                            )?)
                        }
                    }
                };
            let d1 = load(&p.demand1, 0)?;
            let d2 = load(&p.demand2, 1)?;
            let mut stream =
                market::build_market_stream(&p.spec, &d1, &d2, p.day, p.noise_sigma, config.seed)?;
            if config.horizon > 0 {
                stream = stream.truncated(config.horizon);
            }
            let n = p.spec.regions();
            Scenario {
                stream,
                z0: DecisionPoint::from_slices(&vec![p.z0_offset; n], &vec![p.z0_offset; n]),
            }
        }
    };
    Ok(scenario)
}

pub fn solver_config(config: &ExperimentConfig) -> SolverConfig {
    SolverConfig {
        eta: config.eta,
        batch_size: config.batch_size,
        max_iters: config.oracle_max_iters,
        tolerance: config.oracle_tolerance,
        rng_seed: config.seed,
        enforce_cap: config.enforce_cap,
    }
}

#[derive(Serialize)]
pub struct Manifest {
    pub scenario: ScenarioKind,
    pub solver: SolverKind,
    pub horizon: usize,
    pub replications: usize,
    pub dims: (usize, usize),
    pub constants: StreamConstants,
    pub drift_max: f64,
    pub initial_error: f64,
    pub deltas: Vec<f64>,
    pub seed: u64,
    pub subweibull_fit: Option<SubWeibullParams>,
    pub config: ExperimentConfig,
}

struct RunData {
    constants: StreamConstants,
    drift_max: f64,
    initial_error: f64,
    mean_errors: Vec<f64>,
    quantiles: Vec<Vec<f64>>,
    fit: Option<SubWeibullParams>,
    trajectories: Vec<Trajectory>,
}

fn conceptual_run(
    stream: &ProblemStream,
    z0: &DecisionPoint,
    cfg: &SolverConfig,
    deltas: &[f64],
) -> Result<(RunData, EquilibriumSequence), CliError> {
    let refs = equilibrium_sequence(stream, cfg)?;
    let traj = online_primal_dual_with_refs(stream, z0, cfg, &refs)?;
    let errors = traj.errors();
    Ok((
        RunData {
            constants: traj.constants,
            drift_max: traj.max_drift(),
            initial_error: errors[0],
            mean_errors: errors.clone(),
            quantiles: vec![errors; deltas.len()],
            fit: None,
            trajectories: vec![traj],
        },
        refs,
    ))
}

fn stochastic_run(
    stream: &ProblemStream,
    z0: &DecisionPoint,
    cfg: &SolverConfig,
    config: &ExperimentConfig,
) -> Result<RunData, CliError> {
    let summary: ReplicationSummary =
        montecarlo::run_replications(stream, z0, cfg, config.replications)?;
    let pooled = summary.pooled_xi_norms();
    let fit = if pooled.len() >= 100 {
        Some(fit_subweibull(&pooled, &config.theta_grid)?)
    } else {
        None
    };
    let saved = config.replications.min(config.max_saved_trajectories);
    let trajectories = (0..saved)
        .map(|rep| montecarlo::replication_trajectory(stream, z0, cfg, &summary.equilibria, rep))
        .collect::<eqtrack::Result<Vec<_>>>()?;
    Ok(RunData {
        constants: summary.constants,
        drift_max: summary.equilibria.max_drift(),
        initial_error: summary.errors[0][0],
        mean_errors: summary.mean_errors(),
        quantiles: config
            .deltas
            .iter()
            .map(|d| summary.quantile_errors(*d))
            .collect(),
        fit,
        trajectories,
    })
}

fn write_aggregated(path: &Path, data: &RunData, deltas: &[f64], eta: f64) -> Result<(), CliError> {
    let (theta, nu) = data.fit.map(|f| (f.theta, f.nu)).unwrap_or((1.0, 0.0));
    let noiseless = BoundInputs::new(
        data.constants.alpha,
        eta,
        data.drift_max,
        0.0,
        1.0,
        data.initial_error,
        0.5,
    )?;
    let mut file = fs::File::create(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    let mut header = String::from("t,mean_err,bound_det,bound_exp");
    for d in deltas {
        header.push_str(&format!(",q_d{d},hp_d{d}"));
    }
    writeln!(file, "{header}").map_err(io_err)?;
    for t in 0..data.mean_errors.len() {
        let bound_det = expectation_bound(&noiseless, t)?;
        let noisy = BoundInputs {
            nu,
            theta,
            ..noiseless
        };
        let bound_exp = expectation_bound(&noisy, t)?;
        let mut line = format!("{},{},{},{}", t, data.mean_errors[t], bound_det, bound_exp);
        for (i, d) in deltas.iter().enumerate() {
            let hp_inputs = BoundInputs { delta: *d, ..noisy };
            let hp = high_probability_bound(&hp_inputs, t)?;
            line.push_str(&format!(",{},{}", data.quantiles[i][t], hp));
        }
        writeln!(file, "{line}").map_err(io_err)?;
    }
    Ok(())
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Execute a full experiment; returns the manifest for reporting.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<Manifest, CliError> {
    let scenario = build_scenario(config)?;
    let cfg = solver_config(config);
    // sanity-check the stream and step size before any heavy work
    let _ = stream_constants(&scenario.stream, config.eta)?;

    let replications = match config.solver {
        SolverKind::Conceptual => 1,
        SolverKind::Stochastic => config.replications,
    };
    let data = match config.solver {
        SolverKind::Conceptual => {
            conceptual_run(&scenario.stream, &scenario.z0, &cfg, &config.deltas)?.0
        }
        SolverKind::Stochastic => stochastic_run(&scenario.stream, &scenario.z0, &cfg, config)?,
    };

    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    for (rep, traj) in data.trajectories.iter().enumerate() {
        let path = out_dir.join(format!("trajectory_rep{rep:04}.csv"));
        let mut buf = Vec::new();
        traj.write_csv(&mut buf)?;
        fs::write(&path, buf).map_err(io_err)?;
    }
    write_aggregated(
        &out_dir.join("aggregated.csv"),
        &data,
        &config.deltas,
        config.eta,
    )?;

    let manifest = Manifest {
        scenario: config.scenario,
        solver: config.solver,
        horizon: scenario.stream.horizon(),
        replications,
        dims: scenario.stream.dims(),
        constants: data.constants,
        drift_max: data.drift_max,
        initial_error: data.initial_error,
        deltas: config.deltas.clone(),
        seed: config.seed,
        subweibull_fit: data.fit,
        config: config.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(out_dir.join("manifest.json"), json).map_err(io_err)?;
    Ok(manifest)
}

/// Run inside a rayon pool sized by the config (0 = default).
pub fn run_in_pool(config: &ExperimentConfig, out_dir: &Path) -> Result<Manifest, CliError> {
    if config.threads == 0 {
        return run(config, out_dir);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run(config, out_dir))
}

/// Per-step constants of one stream slice.
#[derive(Serialize)]
pub struct StepConstants {
    pub t: usize,
    pub gamma: f64,
    pub lipschitz: f64,
    pub epsilon: f64,
    pub eta_cap: f64,
}

/// Constants summary for `inspect`.
#[derive(Serialize)]
pub struct Inspection {
    pub scenario: ScenarioKind,
    pub horizon: usize,
    pub dims: (usize, usize),
    pub constants: StreamConstants,
    pub eta: f64,
    pub eta_valid: bool,
    /// Per-step (gamma, L, epsilon) ranges across the stream.
    pub gamma_range: (f64, f64),
    pub lipschitz_range: (f64, f64),
    pub epsilon_range: (f64, f64),
    /// Full per-step table, emitted with `--per-step`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_step: Option<Vec<StepConstants>>,
}

pub fn inspect(config: &ExperimentConfig, per_step: bool) -> Result<Inspection, CliError> {
    let scenario = build_scenario(config)?;
    let constants = stream_constants(&scenario.stream, config.eta)?;
    let mut gamma_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut lipschitz_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut epsilon_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut table = per_step.then(Vec::new);
    for (t, p) in scenario.stream.problems().iter().enumerate() {
        gamma_range = (gamma_range.0.min(p.gamma()), gamma_range.1.max(p.gamma()));
        lipschitz_range = (
            lipschitz_range.0.min(p.lipschitz()),
            lipschitz_range.1.max(p.lipschitz()),
        );
        epsilon_range = (
            epsilon_range.0.min(p.epsilon()),
            epsilon_range.1.max(p.epsilon()),
        );
        if let Some(rows) = table.as_mut() {
            rows.push(StepConstants {
                t,
                gamma: p.gamma(),
                lipschitz: p.lipschitz(),
                epsilon: p.epsilon(),
                eta_cap: p.regularity()?.eta_cap(),
            });
        }
    }
    Ok(Inspection {
        scenario: config.scenario,
        horizon: scenario.stream.horizon(),
        dims: scenario.stream.dims(),
        eta: config.eta,
        eta_valid: config.eta < constants.eta_cap,
        constants,
        gamma_range,
        lipschitz_range,
        epsilon_range,
        per_step: table,
    })
}
