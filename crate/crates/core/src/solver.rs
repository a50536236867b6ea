//! Equilibrium oracle (projected primal-dual on the coupled map) and the
//! online conceptual/stochastic trackers.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{DecisionPoint, ProblemStream, Regularity, SaddleProblem};
use crate::rng::stream_rng;
use crate::subweibull::{
    expectation_bound, fit_subweibull, BoundInputs, SubWeibullParams, DEFAULT_THETA_GRID,
};

/// Step size, batch and stopping parameters shared by the solvers.
///
/// `max_iters` and `tolerance` govern the equilibrium oracle's inner
/// fixed-point iteration; `batch_size` only matters for the stochastic
/// tracker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub eta: f64,
    pub batch_size: usize,
    pub max_iters: usize,
    pub tolerance: f64,
    pub rng_seed: u64,
    /// Reject step sizes at or above the sufficient stability cap
    /// `min{1/gamma_hat, gamma_hat/l_hat^2}`. Disable to study divergence.
    pub enforce_cap: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            batch_size: 1,
            max_iters: 2000,
            tolerance: 1e-10,
            rng_seed: 0,
            enforce_cap: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eta <= 0.0 || !self.eta.is_finite() {
            return Err(Error::invalid("eta must be positive and finite"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max iters must be at least 1"));
        }
        if self.tolerance <= 0.0 || self.tolerance.is_nan() {
            return Err(Error::invalid("tolerance must be positive"));
        }
        Ok(())
    }

    fn check_cap(&self, reg: &Regularity) -> Result<()> {
        let cap = reg.eta_cap();
        if self.enforce_cap && self.eta >= cap {
            return Err(Error::StepSizeTooLarge { eta: self.eta, cap });
        }
        Ok(())
    }
}

/// Per-step record of an online run.
#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub t: usize,
    pub iterate: DecisionPoint,
    pub equilibrium: Option<DecisionPoint>,
    /// `||z_t - zbar_t||` when the equilibrium reference is available.
    pub tracking_error: Option<f64>,
    /// `||H_t(z_t) - G_t(z_t)||` for stochastic runs.
    pub xi_norm: Option<f64>,
}

/// Worst-case constants of the stream a run was instrumented with.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StreamConstants {
    pub gamma_min: f64,
    pub lipschitz_max: f64,
    pub epsilon_max: f64,
    pub gamma_hat_min: f64,
    pub l_hat_max: f64,
    /// Binding step-size cap: the minimum of the per-step caps.
    pub eta_cap: f64,
    /// Contraction factor `sqrt(1 - eta * gamma_hat_min)` at the run's eta.
    pub alpha: f64,
    pub eta: f64,
}

/// Worst-case regularity constants over the stream, evaluated at `eta`.
pub fn stream_constants(stream: &ProblemStream, eta: f64) -> Result<StreamConstants> {
    let mut gamma_min = f64::INFINITY;
    let mut lipschitz_max: f64 = 0.0;
    let mut epsilon_max: f64 = 0.0;
    let mut gamma_hat_min = f64::INFINITY;
    let mut l_hat_max: f64 = 0.0;
    let mut eta_cap = f64::INFINITY;
    for p in stream.problems() {
        let reg = p.regularity()?;
        gamma_min = gamma_min.min(p.gamma());
        lipschitz_max = lipschitz_max.max(p.lipschitz());
        epsilon_max = epsilon_max.max(p.epsilon());
        gamma_hat_min = gamma_hat_min.min(reg.gamma_hat);
        l_hat_max = l_hat_max.max(reg.l_hat);
        eta_cap = eta_cap.min(reg.eta_cap());
    }
    let alpha = Regularity {
        gamma_hat: gamma_hat_min,
        l_hat: l_hat_max,
    }
    .alpha(eta);
    Ok(StreamConstants {
        gamma_min,
        lipschitz_max,
        epsilon_max,
        gamma_hat_min,
        l_hat_max,
        eta_cap,
        alpha,
        eta,
    })
}

/// Aligned row produced by [`Trajectory::tracking_errors`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrackingRow {
    pub t: usize,
    pub error: f64,
    /// Conceptual envelope `alpha^t e0 + drift/(1-alpha)`.
    pub bound_conceptual: f64,
    /// Expectation bound including the gradient-noise term.
    pub bound_expectation: f64,
}

/// Record of an online run: per-step iterates, equilibrium references,
/// tracking errors and gradient-error norms, plus the drift sequence and
/// the stream constants.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    /// `drift[t] = ||zbar_{t+1} - zbar_t||`, length `horizon - 1`.
    pub drift: Vec<f64>,
    pub config: SolverConfig,
    pub constants: StreamConstants,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.records.len()
    }

    /// Tracking errors per step; NaN where no equilibrium reference exists.
    pub fn errors(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.tracking_error.unwrap_or(f64::NAN))
            .collect()
    }

    /// Gradient-error norms of the stochastic estimator, in step order.
    pub fn xi_norms(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.xi_norm).collect()
    }

    pub fn max_drift(&self) -> f64 {
        self.drift.iter().fold(0.0, |a, b| a.max(*b))
    }

    /// Sub-Weibull fit of the observed gradient-error norms. Falls back to
    /// the sample maximum (a certified proxy at any theta) when there are
    /// too few samples for a moment fit.
    pub fn fitted_noise(&self, theta_grid: &[f64]) -> Option<SubWeibullParams> {
        let xs = self.xi_norms();
        if xs.is_empty() {
            return None;
        }
        if xs.len() >= 100 {
            if let Ok(fit) = fit_subweibull(&xs, theta_grid) {
                return Some(fit);
            }
        }
        let max = xs.iter().fold(0.0f64, |a, b| a.max(*b));
        Some(SubWeibullParams {
            theta: 0.5,
            nu: max,
        })
    }

    fn bound_inputs(&self) -> Result<(f64, f64, f64, f64, f64)> {
        let e0 = self.records[0]
            .tracking_error
            .ok_or(Error::MissingEquilibrium { t: 0 })?;
        let noise = self
            .fitted_noise(&DEFAULT_THETA_GRID)
            .unwrap_or(SubWeibullParams {
                theta: 1.0,
                nu: 0.0,
            });
        Ok((
            self.constants.alpha,
            self.config.eta,
            self.max_drift(),
            noise.nu,
            e0,
        ))
    }

    /// Joins the error series with the conceptual and expectation bounds,
    /// using the measured drift and the fitted noise proxy.
    pub fn tracking_errors(&self) -> Result<Vec<TrackingRow>> {
        if self.records.is_empty() {
            return Ok(Vec::new());
        }
        for r in &self.records {
            if r.equilibrium.is_none() || r.tracking_error.is_none() {
                return Err(Error::MissingEquilibrium { t: r.t });
            }
        }
        let (alpha, eta, drift, nu, e0) = self.bound_inputs()?;
        let noiseless = BoundInputs::new(alpha, eta, drift, 0.0, 1.0, e0, 0.5)?;
        let noisy = BoundInputs::new(alpha, eta, drift, nu, 1.0, e0, 0.5)?;
        self.records
            .iter()
            .map(|r| {
                Ok(TrackingRow {
                    t: r.t,
                    error: r.tracking_error.expect("checked above"),
                    bound_conceptual: expectation_bound(&noiseless, r.t)?,
                    bound_expectation: expectation_bound(&noisy, r.t)?,
                })
            })
            .collect()
    }

    /// CSV export with header `t,err,xi_norm,bound_det,bound_exp,delta_t`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "t,err,xi_norm,bound_det,bound_exp,delta_t")?;
        let rows = self.tracking_errors()?;
        for (i, row) in rows.iter().enumerate() {
            let xi = self.records[i]
                .xi_norm
                .map(|v| v.to_string())
                .unwrap_or_default();
            let delta = self.drift.get(i).map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                row.t, row.error, xi, row.bound_conceptual, row.bound_expectation, delta
            )?;
        }
        Ok(())
    }
}

/// Projected fixed-point iteration `z <- proj(z - eta (A z + c))`, shared by
/// the oracle and the retraining step. Returns the post-step iterate once
/// the step length falls below the tolerance.
fn projected_fixed_point(
    problem: &SaddleProblem,
    start: DVector<f64>,
    gradient: impl Fn(&DVector<f64>, &mut DVector<f64>),
    cfg: &SolverConfig,
) -> Result<DecisionPoint> {
    let n = problem.n();
    let m = problem.m();
    let mut z = start;
    let mut g = DVector::zeros(n + m);
    let mut next = DVector::zeros(n + m);
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        gradient(&z, &mut g);
        next.copy_from(&z);
        next.axpy(-cfg.eta, &g, 1.0);
        problem.project_stacked_in_place(&mut next);
        residual = (0..n + m)
            .map(|i| (next[i] - z[i]) * (next[i] - z[i]))
            .sum::<f64>()
            .sqrt();
        std::mem::swap(&mut z, &mut next);
        if residual <= cfg.tolerance {
            return DecisionPoint::from_stacked(&z, n, m);
        }
    }
    Err(Error::MaxItersExceeded {
        max_iters: cfg.max_iters,
        residual,
        last: Box::new(DecisionPoint::from_stacked(&z, n, m)?),
    })
}

/// Equilibrium of the time-t problem: the fixed point of
/// `z -> proj(z - eta G(z; z))`, found by projected primal-dual iteration
/// from the constraint-set midpoint.
pub fn equilibrium_oracle(problem: &SaddleProblem, cfg: &SolverConfig) -> Result<DecisionPoint> {
    equilibrium_oracle_from(problem, &problem.interior_start(), cfg)
}

/// Same as [`equilibrium_oracle`] but warm-started from `start` (projected
/// into the feasible set first).
pub fn equilibrium_oracle_from(
    problem: &SaddleProblem,
    start: &DecisionPoint,
    cfg: &SolverConfig,
) -> Result<DecisionPoint> {
    cfg.validate()?;
    let reg = problem.regularity()?;
    cfg.check_cap(&reg)?;
    let z0 = problem.project_z(start)?.stacked();
    projected_fixed_point(
        problem,
        z0,
        |z, g| problem.coupled_gradient_stacked_into(z, g),
        cfg,
    )
}

/// One repeated-retraining outer step: solve the stationary saddle problem
/// with the distribution frozen at `D(anchor)`.
pub fn retraining_step(
    problem: &SaddleProblem,
    anchor: &DecisionPoint,
    cfg: &SolverConfig,
) -> Result<DecisionPoint> {
    cfg.validate()?;
    problem.regularity()?;
    // the frozen problem is gamma-strongly monotone and L-Lipschitz
    let frozen = Regularity {
        gamma_hat: problem.gamma(),
        l_hat: problem.lipschitz(),
    };
    cfg.check_cap(&frozen)?;
    let mean = problem.dist_map().mean_shift(anchor)?;
    let z0 = problem.project_z(anchor)?.stacked();
    projected_fixed_point(
        problem,
        z0,
        |z, g| problem.gradient_with_mean_into(z, &mean, g),
        cfg,
    )
}

/// Equilibrium references for a whole stream, warm-starting each solve at
/// the previous equilibrium, plus the realized drift sequence.
#[derive(Clone, Debug)]
pub struct EquilibriumSequence {
    pub points: Vec<DecisionPoint>,
    /// `drift[t] = ||points[t+1] - points[t]||`.
    pub drift: Vec<f64>,
}

impl EquilibriumSequence {
    pub fn max_drift(&self) -> f64 {
        self.drift.iter().fold(0.0, |a, b| a.max(*b))
    }
}

pub fn equilibrium_sequence(
    stream: &ProblemStream,
    cfg: &SolverConfig,
) -> Result<EquilibriumSequence> {
    let mut points = Vec::with_capacity(stream.horizon());
    for t in 0..stream.horizon() {
        let problem = stream.problem(t);
        let point = match points.last() {
            Some(prev) => equilibrium_oracle_from(problem, prev, cfg)?,
            None => equilibrium_oracle(problem, cfg)?,
        };
        points.push(point);
    }
    let drift = points.windows(2).map(|w| w[0].distance(&w[1])).collect();
    Ok(EquilibriumSequence { points, drift })
}

enum GradientMode {
    Conceptual,
    Stochastic,
}

fn run_online(
    stream: &ProblemStream,
    z0: &DecisionPoint,
    cfg: &SolverConfig,
    mode: GradientMode,
    refs: Option<&EquilibriumSequence>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let (n, m) = stream.dims();
    if z0.dims() != (n, m) {
        return Err(Error::DimensionMismatch {
            expected: n + m,
            actual: z0.len(),
        });
    }
    if !stream.problem(0).contains(z0, 1e-9) {
        return Err(Error::invalid("z0 must lie in the initial constraint set"));
    }
    let constants = stream_constants(stream, cfg.eta)?;
    if cfg.enforce_cap && cfg.eta >= constants.eta_cap {
        return Err(Error::StepSizeTooLarge {
            eta: cfg.eta,
            cap: constants.eta_cap,
        });
    }
    let owned;
    let eqs = match refs {
        Some(r) => {
            if r.points.len() != stream.horizon() {
                return Err(Error::DimensionMismatch {
                    expected: stream.horizon(),
                    actual: r.points.len(),
                });
            }
            r
        }
        None => {
            owned = equilibrium_sequence(stream, cfg)?;
            &owned
        }
    };

    let mut z = z0.stacked();
    let mut grad = DVector::zeros(n + m);
    let mut exact = DVector::zeros(n + m);
    let mut records = Vec::with_capacity(stream.horizon());
    for t in 0..stream.horizon() {
        let problem = stream.problem(t);
        let iterate = DecisionPoint::from_stacked(&z, n, m)?;
        let reference = &eqs.points[t];
        let error = iterate.distance(reference);
        let xi_norm = match mode {
            GradientMode::Conceptual => {
                problem.coupled_gradient_stacked_into(&z, &mut grad);
                None
            }
            GradientMode::Stochastic => {
                // g is affine in w, so averaging the draws first gives the
                // batch-mean gradient estimator exactly
                let mut rng = stream_rng(cfg.rng_seed, &[t as u64]);
                let sample_mean =
                    problem
                        .dist_map()
                        .sample_mean_with_rng(&iterate, cfg.batch_size, &mut rng)?;
                problem.gradient_with_mean_into(&z, &sample_mean, &mut grad);
                // instrumentation: xi measures the sampling deviation, so the
                // exact gradient is evaluated along the same path
                let exact_mean = problem.dist_map().mean_shift(&iterate)?;
                problem.gradient_with_mean_into(&z, &exact_mean, &mut exact);
                let xi = (0..n + m)
                    .map(|i| (grad[i] - exact[i]) * (grad[i] - exact[i]))
                    .sum::<f64>()
                    .sqrt();
                Some(xi)
            }
        };
        records.push(StepRecord {
            t,
            iterate,
            equilibrium: Some(reference.clone()),
            tracking_error: Some(error),
            xi_norm,
        });
        z.axpy(-cfg.eta, &grad, 1.0);
        problem.project_stacked_in_place(&mut z);
    }
    Ok(Trajectory {
        records,
        drift: eqs.drift.clone(),
        config: cfg.clone(),
        constants,
    })
}

/// Conceptual tracker `z_{t+1} = proj(z_t - eta G_t(z_t))` using the exact
/// coupled gradient; the oracle is invoked per step for the reference.
pub fn online_primal_dual(
    stream: &ProblemStream,
    z0: &DecisionPoint,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    run_online(stream, z0, cfg, GradientMode::Conceptual, None)
}

/// Conceptual tracker reusing a precomputed equilibrium sequence.
pub fn online_primal_dual_with_refs(
    stream: &ProblemStream,
    z0: &DecisionPoint,
    cfg: &SolverConfig,
    refs: &EquilibriumSequence,
) -> Result<Trajectory> {
    run_online(stream, z0, cfg, GradientMode::Conceptual, Some(refs))
}

/// Stochastic tracker: per step draws `batch_size` samples from `D_t(z_t)`,
/// forms the batch-mean estimator, and records the gradient-error norm
/// against the exact coupled gradient.
pub fn online_stochastic_primal_dual(
    stream: &ProblemStream,
    z0: &DecisionPoint,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    run_online(stream, z0, cfg, GradientMode::Stochastic, None)
}

/// Stochastic tracker reusing a precomputed equilibrium sequence.
pub fn online_stochastic_primal_dual_with_refs(
    stream: &ProblemStream,
    z0: &DecisionPoint,
    cfg: &SolverConfig,
    refs: &EquilibriumSequence,
) -> Result<Trajectory> {
    run_online(stream, z0, cfg, GradientMode::Stochastic, Some(refs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario;
    use approx::assert_relative_eq;

    fn scalar_cfg() -> SolverConfig {
        SolverConfig {
            eta: 0.1,
            max_iters: 20_000,
            tolerance: 1e-12,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn oracle_finds_scalar_equilibrium() {
        // x = mu0 + eps x at the fixed point: x = 2 for mu0 = 1, eps = 0.5
        let p = scenario::scalar_problem(1.0, 0.5, 0.0, 10.0).unwrap();
        let z = equilibrium_oracle(&p, &scalar_cfg()).unwrap();
        assert_relative_eq!(z.x[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(z.y[0], 0.0, epsilon = 1e-8);
        // fixed-point residual post-condition
        let step = p
            .project_z(
                &DecisionPoint::from_stacked(
                    &(z.stacked() - 0.1 * p.coupled_gradient(&z).unwrap()),
                    1,
                    1,
                )
                .unwrap(),
            )
            .unwrap();
        assert!(z.distance(&step) <= 1e-11);
    }

    #[test]
    fn oracle_finds_static_saddle_point() {
        // epsilon = 0, minimizer at the origin inside the box
        let p = scenario::scalar_problem(0.0, 0.0, 0.0, 5.0).unwrap();
        let z = equilibrium_oracle(&p, &scalar_cfg()).unwrap();
        assert!(z.x[0].abs() < 1e-9 && z.y[0].abs() < 1e-9);
    }

    #[test]
    fn oracle_multi_start_agreement() {
        let p = scenario::scalar_problem(1.0, 0.5, 0.0, 10.0).unwrap();
        let cfg = scalar_cfg();
        let a = equilibrium_oracle_from(&p, &DecisionPoint::from_slices(&[10.0], &[10.0]), &cfg)
            .unwrap();
        let b = equilibrium_oracle_from(&p, &DecisionPoint::from_slices(&[-10.0], &[-10.0]), &cfg)
            .unwrap();
        assert!(a.distance(&b) <= 2.0 * cfg.tolerance * 1e3);
    }

    #[test]
    fn oracle_reports_max_iters_with_last_iterate() {
        let p = scenario::scalar_problem(1.0, 0.5, 0.0, 10.0).unwrap();
        let cfg = SolverConfig {
            eta: 1e-3,
            max_iters: 5,
            tolerance: 1e-12,
            ..SolverConfig::default()
        };
        match equilibrium_oracle(&p, &cfg) {
            Err(Error::MaxItersExceeded {
                max_iters,
                residual,
                last,
            }) => {
                assert_eq!(max_iters, 5);
                assert!(residual > 0.0);
                assert!(last.x[0].is_finite());
            }
            other => panic!("expected MaxItersExceeded, got {other:?}"),
        }
    }

    #[test]
    fn oracle_rejects_eta_above_cap() {
        let p = scenario::scalar_problem(1.0, 0.5, 0.0, 10.0).unwrap();
        // cap = min(2, 0.5/2.25) = 0.2222
        let cfg = SolverConfig {
            eta: 0.5,
            ..scalar_cfg()
        };
        assert!(matches!(
            equilibrium_oracle(&p, &cfg),
            Err(Error::StepSizeTooLarge { .. })
        ));
        let relaxed = SolverConfig {
            enforce_cap: false,
            eta: 0.5,
            max_iters: 100_000,
            ..scalar_cfg()
        };
        // cap is sufficient, not necessary: this eta still converges
        let z = equilibrium_oracle(&p, &relaxed).unwrap();
        assert_relative_eq!(z.x[0], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn retraining_step_fixed_point_and_rate() {
        let p = scenario::scalar_problem(1.0, 0.5, 0.0, 10.0).unwrap();
        let cfg = scalar_cfg();
        let eq = equilibrium_oracle(&p, &cfg).unwrap();

        // anchored at the equilibrium it returns the anchor
        let back = retraining_step(&p, &eq, &cfg).unwrap();
        assert!(back.distance(&eq) <= 1e-9);

        // anchored at x' = 0 the inner solution is x = mu0 = 1
        let z = retraining_step(&p, &DecisionPoint::from_slices(&[0.0], &[0.0]), &cfg).unwrap();
        assert_relative_eq!(z.x[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(z.y[0], 0.0, epsilon = 1e-9);

        // repeated retraining contracts at rate <= eps L / gamma = 0.5
        let mut current = DecisionPoint::from_slices(&[-10.0], &[5.0]);
        let mut dist = current.distance(&eq);
        for _ in 0..30 {
            current = retraining_step(&p, &current, &cfg).unwrap();
            let next_dist = current.distance(&eq);
            if dist > 1e-6 {
                assert!(next_dist <= 0.55 * dist, "rate {}", next_dist / dist);
            }
            dist = next_dist;
        }
        assert!(dist < 1e-6);
    }

    #[test]
    fn static_stream_contracts_within_alpha_envelope() {
        let stream = scenario::scalar_static_stream(1.0, 0.5, 0.0, 10.0, 120).unwrap();
        let cfg = scalar_cfg();
        let z0 = DecisionPoint::from_slices(&[8.0], &[-6.0]);
        let traj = online_primal_dual(&stream, &z0, &cfg).unwrap();
        let alpha = traj.constants.alpha;
        let errs = traj.errors();
        for t in 1..errs.len() {
            assert!(errs[t] <= alpha.powi(t as i32) * errs[0] + 1e-9);
        }
        // drift is zero for the static stream
        assert!(traj.max_drift() <= 1e-9);
    }

    #[test]
    fn starting_at_equilibrium_stays_there() {
        let stream = scenario::scalar_static_stream(1.0, 0.5, 0.0, 10.0, 200).unwrap();
        let cfg = scalar_cfg();
        let eq = equilibrium_oracle(stream.problem(0), &cfg).unwrap();
        let traj = online_primal_dual(&stream, &eq, &cfg).unwrap();
        for e in traj.errors() {
            assert!(e <= 1e-8);
        }
    }

    #[test]
    fn drifting_stream_respects_asymptotic_bound() {
        let stream = scenario::scalar_drift_stream(0.0, 1.0, 100.0, 0.5, 0.0, 10.0, 400).unwrap();
        let cfg = scalar_cfg();
        let z0 = DecisionPoint::from_slices(&[5.0], &[5.0]);
        let traj = online_primal_dual(&stream, &z0, &cfg).unwrap();
        let alpha = traj.constants.alpha;
        let delta = traj.max_drift();
        assert!(delta > 0.0);
        let errs = traj.errors();
        let e0 = errs[0];
        for (t, e) in errs.iter().enumerate() {
            assert!(*e <= alpha.powi(t as i32) * e0 + delta / (1.0 - alpha) + 1e-6);
        }
    }

    #[test]
    fn stochastic_with_point_mass_matches_conceptual() {
        let stream = scenario::scalar_static_stream(1.0, 0.5, 0.0, 10.0, 100).unwrap();
        let cfg = scalar_cfg();
        let z0 = DecisionPoint::from_slices(&[4.0], &[4.0]);
        let a = online_primal_dual(&stream, &z0, &cfg).unwrap();
        let b = online_stochastic_primal_dual(&stream, &z0, &cfg).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert!(ra.iterate.distance(&rb.iterate) <= 1e-12);
            assert_eq!(rb.xi_norm, Some(0.0));
        }
    }

    #[test]
    fn stochastic_is_bit_reproducible() {
        let stream = scenario::scalar_static_stream(1.0, 0.5, 1.0, 10.0, 150).unwrap();
        let cfg = SolverConfig {
            rng_seed: 9,
            ..scalar_cfg()
        };
        let z0 = DecisionPoint::from_slices(&[4.0], &[4.0]);
        let a = online_stochastic_primal_dual(&stream, &z0, &cfg).unwrap();
        let b = online_stochastic_primal_dual(&stream, &z0, &cfg).unwrap();
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        a.write_csv(&mut csv_a).unwrap();
        b.write_csv(&mut csv_b).unwrap();
        assert_eq!(csv_a, csv_b);
        let c = online_stochastic_primal_dual(
            &stream,
            &z0,
            &SolverConfig {
                rng_seed: 10,
                ..cfg
            },
        )
        .unwrap();
        assert_ne!(
            a.records.last().unwrap().iterate,
            c.records.last().unwrap().iterate
        );
    }

    #[test]
    fn large_batch_gradient_error_is_tiny() {
        let stream = scenario::scalar_static_stream(1.0, 0.5, 1.0, 10.0, 1).unwrap();
        let cfg = SolverConfig {
            batch_size: 1_000_000,
            rng_seed: 4,
            ..scalar_cfg()
        };
        let z0 = DecisionPoint::from_slices(&[0.0], &[0.0]);
        let traj = online_stochastic_primal_dual(&stream, &z0, &cfg).unwrap();
        let xi0 = traj.records[0].xi_norm.unwrap();
        assert!(xi0 <= 5.0 / (cfg.batch_size as f64).sqrt());
    }

    #[test]
    fn iterates_remain_feasible() {
        let stream = scenario::scalar_static_stream(1.0, 0.5, 1.0, 2.0, 300).unwrap();
        let cfg = SolverConfig {
            rng_seed: 12,
            ..scalar_cfg()
        };
        let z0 = DecisionPoint::from_slices(&[2.0], &[-2.0]);
        let traj = online_stochastic_primal_dual(&stream, &z0, &cfg).unwrap();
        for (t, r) in traj.records.iter().enumerate() {
            assert!(stream.problem(t).contains(&r.iterate, 1e-12));
        }
    }

    #[test]
    fn rejects_infeasible_start() {
        let stream = scenario::scalar_static_stream(1.0, 0.5, 0.0, 1.0, 10).unwrap();
        let z0 = DecisionPoint::from_slices(&[5.0], &[0.0]);
        assert!(matches!(
            online_primal_dual(&stream, &z0, &scalar_cfg()),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn tracking_errors_static_noiseless() {
        let stream = scenario::scalar_static_stream(1.0, 0.5, 0.0, 10.0, 50).unwrap();
        let cfg = scalar_cfg();
        let z0 = DecisionPoint::from_slices(&[8.0], &[0.0]);
        let traj = online_primal_dual(&stream, &z0, &cfg).unwrap();
        let rows = traj.tracking_errors().unwrap();
        assert_eq!(rows.len(), 50);
        let alpha = traj.constants.alpha;
        for row in &rows {
            let envelope = alpha.powi(row.t as i32) * rows[0].error;
            assert!(row.error <= envelope + 1e-9);
            assert_relative_eq!(row.bound_conceptual, envelope, epsilon = 1e-9);
            // no noise: both bound columns coincide
            assert_relative_eq!(row.bound_expectation, row.bound_conceptual, epsilon = 1e-12);
        }
    }

    #[test]
    fn tracking_errors_empty_trajectory() {
        let stream = scenario::scalar_static_stream(1.0, 0.5, 0.0, 10.0, 5).unwrap();
        let cfg = scalar_cfg();
        let traj =
            online_primal_dual(&stream, &DecisionPoint::from_slices(&[0.0], &[0.0]), &cfg).unwrap();
        let empty = Trajectory {
            records: Vec::new(),
            drift: Vec::new(),
            config: cfg,
            constants: traj.constants,
        };
        assert!(empty.tracking_errors().unwrap().is_empty());
    }

    #[test]
    fn tracking_errors_requires_references() {
        let stream = scenario::scalar_static_stream(1.0, 0.5, 0.0, 10.0, 5).unwrap();
        let cfg = scalar_cfg();
        let mut traj =
            online_primal_dual(&stream, &DecisionPoint::from_slices(&[0.0], &[0.0]), &cfg).unwrap();
        traj.records[3].equilibrium = None;
        traj.records[3].tracking_error = None;
        assert!(matches!(
            traj.tracking_errors(),
            Err(Error::MissingEquilibrium { t: 3 })
        ));
    }

    #[test]
    fn drifting_bounds_monotone_toward_asymptote() {
        let stream = scenario::scalar_drift_stream(0.0, 1.0, 100.0, 0.5, 0.0, 10.0, 300).unwrap();
        let cfg = scalar_cfg();
        let z0 = DecisionPoint::from_slices(&[5.0], &[5.0]);
        let traj = online_primal_dual(&stream, &z0, &cfg).unwrap();
        let rows = traj.tracking_errors().unwrap();
        let alpha = traj.constants.alpha;
        let asymptote = traj.max_drift() / (1.0 - alpha);
        for w in rows.windows(2) {
            assert!(w[1].bound_conceptual <= w[0].bound_conceptual + 1e-12);
            assert!(w[1].bound_conceptual >= asymptote - 1e-12);
        }
    }
}
