//! Python bindings: the main problem/solver/market types and the
//! sub-Weibull toolkit, driven in-process.
//!
//! Build with `cargo build -p eqtrack-py --release` and import the
//! produced `libeqtrack_py.so` as `eqtrack_py` (see python/smoke_test.py).

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use eqtrack::distribution::{BaseDistribution, DistributionalMap};
use eqtrack::market;
use eqtrack::problem::{ConstraintSet, DecisionPoint, ProblemStream, SaddleProblem};
use eqtrack::scenario;
use eqtrack::solver::{self, SolverConfig, Trajectory};
use eqtrack::subweibull::{self, SubWeibullParams};

fn err(e: eqtrack::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn vector(values: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(values)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("matrix needs at least one row"));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("matrix rows have unequal lengths"));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(
        flat.len() / ncols.max(1),
        ncols,
        &flat,
    ))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Stacked primal-dual decision point z = (x, y).
#[pyclass(name = "DecisionPoint", skip_from_py_object)]
#[derive(Clone)]
struct PyDecisionPoint {
    inner: DecisionPoint,
}

#[pymethods]
impl PyDecisionPoint {
    #[new]
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            inner: DecisionPoint::new(vector(x), vector(y)),
        }
    }

    #[getter]
    fn x(&self) -> Vec<f64> {
        self.inner.x.as_slice().to_vec()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y.as_slice().to_vec()
    }

    fn stacked(&self) -> Vec<f64> {
        self.inner.stacked().as_slice().to_vec()
    }

    fn distance(&self, other: &Self) -> f64 {
        self.inner.distance(&other.inner)
    }

    fn __repr__(&self) -> String {
        format!("DecisionPoint(x={:?}, y={:?})", self.x(), self.y())
    }
}

/// Box or ball constraint set with Euclidean projection.
#[pyclass(name = "ConstraintSet", skip_from_py_object)]
#[derive(Clone)]
struct PyConstraintSet {
    inner: ConstraintSet,
}

#[pymethods]
impl PyConstraintSet {
    #[staticmethod]
    #[pyo3(name = "box")]
    fn box_set(lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: ConstraintSet::box_set(vector(lower), vector(upper)).map_err(err)?,
        })
    }

    #[staticmethod]
    fn ball(center: Vec<f64>, radius: f64) -> PyResult<Self> {
        Ok(Self {
            inner: ConstraintSet::ball(vector(center), radius).map_err(err)?,
        })
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn project(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .project(&vector(v))
            .map_err(err)?
            .as_slice()
            .to_vec())
    }
}

/// Location-scale map D(z) = law(w0 + M z).
#[pyclass(name = "DistributionalMap", skip_from_py_object)]
#[derive(Clone)]
struct PyDistributionalMap {
    inner: DistributionalMap,
}

#[pymethods]
impl PyDistributionalMap {
    /// Gaussian base with the given mean and covariance.
    #[staticmethod]
    fn gaussian(mean: Vec<f64>, covariance: Vec<Vec<f64>>, shift: Vec<Vec<f64>>) -> PyResult<Self> {
        let base = BaseDistribution::gaussian(vector(mean), matrix(covariance)?).map_err(err)?;
        Ok(Self {
            inner: DistributionalMap::new(base, matrix(shift)?).map_err(err)?,
        })
    }

    /// Empirical base resampling the given observations (rows).
    #[staticmethod]
    fn empirical(samples: Vec<Vec<f64>>, shift: Vec<Vec<f64>>) -> PyResult<Self> {
        let base = BaseDistribution::empirical(matrix(samples)?).map_err(err)?;
        Ok(Self {
            inner: DistributionalMap::new(base, matrix(shift)?).map_err(err)?,
        })
    }

    /// The Wasserstein-1 Lipschitz constant ||M||_2.
    fn lipschitz_constant(&self) -> f64 {
        self.inner.lipschitz_constant()
    }

    fn mean_shift(&self, z: &PyDecisionPoint) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .mean_shift(&z.inner)
            .map_err(err)?
            .as_slice()
            .to_vec())
    }

    /// `count` i.i.d. draws from D(z), deterministic given the seed.
    fn sample(&self, z: &PyDecisionPoint, count: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(
            &self.inner.sample(&z.inner, count, seed).map_err(err)?,
        ))
    }
}

/// One time slice of the online saddle problem.
#[pyclass(name = "SaddleProblem", skip_from_py_object)]
#[derive(Clone)]
struct PySaddleProblem {
    inner: SaddleProblem,
}

#[pymethods]
impl PySaddleProblem {
    /// Scalar prototype f = x^2/2 - y^2/2 - w x with
    /// w ~ N(mu0 + epsilon x, sigma^2) on [-half_width, half_width]^2.
    #[staticmethod]
    #[pyo3(signature = (mu0, epsilon, noise_sigma=0.0, half_width=10.0))]
    fn scalar(mu0: f64, epsilon: f64, noise_sigma: f64, half_width: f64) -> PyResult<Self> {
        Ok(Self {
            inner: scenario::scalar_problem(mu0, epsilon, noise_sigma, half_width).map_err(err)?,
        })
    }

    /// Deserialize a problem from its JSON configuration.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    /// Strong convexity/concavity modulus computed from the matrices.
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    /// Joint smoothness constant of the gradient map.
    #[getter]
    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz()
    }

    /// Wasserstein-1 Lipschitz constant of the distributional map.
    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    /// (gamma_hat, l_hat, eta_cap) of the coupled map; raises when
    /// epsilon * L >= gamma.
    fn regularity(&self) -> PyResult<(f64, f64, f64)> {
        let reg = self.inner.regularity().map_err(err)?;
        Ok((reg.gamma_hat, reg.l_hat, reg.eta_cap()))
    }

    /// Contraction factor sqrt(1 - eta * gamma_hat).
    fn alpha(&self, eta: f64) -> PyResult<f64> {
        Ok(self.inner.regularity().map_err(err)?.alpha(eta))
    }

    fn project(&self, z: &PyDecisionPoint) -> PyResult<PyDecisionPoint> {
        Ok(PyDecisionPoint {
            inner: self.inner.project_z(&z.inner).map_err(err)?,
        })
    }

    fn objective_value(&self, z: &PyDecisionPoint, w: Vec<f64>) -> PyResult<f64> {
        self.inner
            .objective_value(&z.inner, &vector(w))
            .map_err(err)
    }

    /// Stacked stochastic gradient g(z, w) = (grad_x f, -grad_y f).
    fn stochastic_gradient(&self, z: &PyDecisionPoint, w: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .stochastic_gradient(&z.inner, &vector(w))
            .map_err(err)?
            .as_slice()
            .to_vec())
    }

    /// Decoupled gradient G(z; z') = E_{w ~ D(z')} g(z, w).
    fn decoupled_gradient(
        &self,
        z: &PyDecisionPoint,
        z_prime: &PyDecisionPoint,
    ) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .decoupled_gradient(&z.inner, &z_prime.inner)
            .map_err(err)?
            .as_slice()
            .to_vec())
    }

    /// Coupled map G(z) = G(z; z) iterated by the solvers.
    fn coupled_gradient(&self, z: &PyDecisionPoint) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .coupled_gradient(&z.inner)
            .map_err(err)?
            .as_slice()
            .to_vec())
    }

    fn dist_map(&self) -> PyDistributionalMap {
        PyDistributionalMap {
            inner: self.inner.dist_map().clone(),
        }
    }
}

/// Time-indexed sequence of saddle problems.
#[pyclass(name = "ProblemStream")]
struct PyProblemStream {
    inner: ProblemStream,
}

#[pymethods]
impl PyProblemStream {
    /// Repeat one problem for `horizon` steps.
    #[staticmethod]
    fn constant(problem: &PySaddleProblem, horizon: usize) -> PyResult<Self> {
        Ok(Self {
            inner: ProblemStream::constant(problem.inner.clone(), horizon).map_err(err)?,
        })
    }

    /// Scalar stream with mu0(t) = mu0 + amplitude sin(2 pi t / period).
    #[staticmethod]
    #[pyo3(signature = (mu0, amplitude, period, epsilon, noise_sigma, half_width, horizon))]
    fn scalar_drift(
        mu0: f64,
        amplitude: f64,
        period: f64,
        epsilon: f64,
        noise_sigma: f64,
        half_width: f64,
        horizon: usize,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: scenario::scalar_drift_stream(
                mu0,
                amplitude,
                period,
                epsilon,
                noise_sigma,
                half_width,
                horizon,
            )
            .map_err(err)?,
        })
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn problem(&self, t: usize) -> PyResult<PySaddleProblem> {
        if t >= self.inner.horizon() {
            return Err(PyValueError::new_err(format!(
                "t = {t} out of range (horizon {})",
                self.inner.horizon()
            )));
        }
        Ok(PySaddleProblem {
            inner: self.inner.problem(t).clone(),
        })
    }

    fn truncated(&self, horizon: usize) -> Self {
        Self {
            inner: self.inner.clone().truncated(horizon),
        }
    }
}

/// Step size, batch and stopping parameters for the solvers.
#[pyclass(name = "SolverConfig", skip_from_py_object)]
#[derive(Clone)]
struct PySolverConfig {
    inner: SolverConfig,
}

#[pymethods]
impl PySolverConfig {
    #[new]
    #[pyo3(signature = (eta=1e-3, batch_size=1, max_iters=2000, tolerance=1e-10, seed=0, enforce_cap=true))]
    fn new(
        eta: f64,
        batch_size: usize,
        max_iters: usize,
        tolerance: f64,
        seed: u64,
        enforce_cap: bool,
    ) -> Self {
        Self {
            inner: SolverConfig {
                eta,
                batch_size,
                max_iters,
                tolerance,
                rng_seed: seed,
                enforce_cap,
            },
        }
    }
}

/// Result of an online run: errors, gradient-error norms, drift, bounds.
#[pyclass(name = "Trajectory")]
struct PyTrajectory {
    inner: Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn errors(&self) -> Vec<f64> {
        self.inner.errors()
    }

    fn xi_norms(&self) -> Vec<f64> {
        self.inner.xi_norms()
    }

    fn drift(&self) -> Vec<f64> {
        self.inner.drift.clone()
    }

    fn max_drift(&self) -> f64 {
        self.inner.max_drift()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.constants.alpha
    }

    #[getter]
    fn eta_cap(&self) -> f64 {
        self.inner.constants.eta_cap
    }

    fn iterate(&self, t: usize) -> PyResult<PyDecisionPoint> {
        self.inner
            .records
            .get(t)
            .map(|r| PyDecisionPoint {
                inner: r.iterate.clone(),
            })
            .ok_or_else(|| PyValueError::new_err(format!("t = {t} out of range")))
    }

    fn equilibrium(&self, t: usize) -> PyResult<Option<PyDecisionPoint>> {
        self.inner
            .records
            .get(t)
            .map(|r| {
                r.equilibrium
                    .as_ref()
                    .map(|e| PyDecisionPoint { inner: e.clone() })
            })
            .ok_or_else(|| PyValueError::new_err(format!("t = {t} out of range")))
    }

    /// Rows (t, error, bound_conceptual, bound_expectation).
    fn tracking_errors(&self) -> PyResult<Vec<(usize, f64, f64, f64)>> {
        Ok(self
            .inner
            .tracking_errors()
            .map_err(err)?
            .into_iter()
            .map(|r| (r.t, r.error, r.bound_conceptual, r.bound_expectation))
            .collect())
    }

    /// Fitted (theta, nu) of the observed gradient-error norms.
    fn fitted_noise(&self) -> Option<(f64, f64)> {
        self.inner
            .fitted_noise(&subweibull::DEFAULT_THETA_GRID)
            .map(|p| (p.theta, p.nu))
    }

    /// Write the CSV with header t,err,xi_norm,bound_det,bound_exp,delta_t.
    fn to_csv(&self, path: &str) -> PyResult<()> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(err)?;
        std::fs::write(path, buf).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

/// Per-minute demand values with station metadata.
#[pyclass(name = "DemandSeries", skip_from_py_object)]
#[derive(Clone)]
struct PyDemandSeries {
    inner: market::DemandSeries,
}

#[pymethods]
impl PyDemandSeries {
    #[getter]
    fn days(&self) -> usize {
        self.inner.days()
    }

    #[getter]
    fn minutes_per_day(&self) -> usize {
        self.inner.minutes_per_day()
    }

    fn day_values(&self, day: usize) -> PyResult<Vec<f64>> {
        if day >= self.inner.days() {
            return Err(PyValueError::new_err(format!("day {day} out of range")));
        }
        Ok(self.inner.values().row(day).iter().copied().collect())
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }
}

#[pyfunction]
#[pyo3(signature = (ports, events, power_kw, days, noise, seed))]
fn generate_synthetic_demand(
    ports: u32,
    events: u32,
    power_kw: f64,
    days: usize,
    noise: f64,
    seed: u64,
) -> PyResult<PyDemandSeries> {
    let station = market::StationSpec::new(ports, events, power_kw);
    Ok(PyDemandSeries {
        inner: market::generate_synthetic_demand(&station, days, noise, seed).map_err(err)?,
    })
}

#[pyfunction]
fn load_demand(path: &str) -> PyResult<PyDemandSeries> {
    Ok(PyDemandSeries {
        inner: market::load_demand(path).map_err(err)?,
    })
}

/// Per-minute normalization: center, then divide by the population
/// variance ("variance" mode) or the standard deviation ("std_dev").
#[pyfunction]
#[pyo3(signature = (series, mode="variance"))]
fn normalize_demand(series: &PyDemandSeries, mode: &str) -> PyResult<PyDemandSeries> {
    let mode = match mode {
        "variance" => market::Normalization::Variance,
        "std_dev" => market::Normalization::StdDev,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown normalization {other:?}"
            )))
        }
    };
    Ok(PyDemandSeries {
        inner: market::normalize_demand_with(&series.inner, mode).map_err(err)?,
    })
}

/// Tent elasticity h_t(p) with the default c(p) table.
#[pyfunction]
#[pyo3(signature = (power_kw, t_minute, midpoint=720))]
fn elasticity(power_kw: f64, t_minute: usize, midpoint: usize) -> PyResult<f64> {
    market::elasticity(
        power_kw,
        t_minute,
        midpoint,
        &market::ElasticityTable::default(),
    )
    .map_err(err)
}

/// Build the per-minute market stream; `spec_json` overrides the default
/// MarketSpec (serialized as JSON).
#[pyfunction]
#[pyo3(signature = (demand1, demand2, day, noise_sigma, seed, spec_json=None))]
fn build_market_stream(
    demand1: &PyDemandSeries,
    demand2: &PyDemandSeries,
    day: usize,
    noise_sigma: f64,
    seed: u64,
    spec_json: Option<&str>,
) -> PyResult<PyProblemStream> {
    let spec: market::MarketSpec = match spec_json {
        Some(text) => {
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?
        }
        None => market::MarketSpec::default(),
    };
    Ok(PyProblemStream {
        inner: market::build_market_stream(
            &spec,
            &demand1.inner,
            &demand2.inner,
            day,
            noise_sigma,
            seed,
        )
        .map_err(err)?,
    })
}

#[pyfunction]
fn default_market_spec_json() -> PyResult<String> {
    serde_json::to_string_pretty(&market::MarketSpec::default())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn equilibrium_oracle(
    problem: &PySaddleProblem,
    config: &PySolverConfig,
) -> PyResult<PyDecisionPoint> {
    Ok(PyDecisionPoint {
        inner: solver::equilibrium_oracle(&problem.inner, &config.inner).map_err(err)?,
    })
}

#[pyfunction]
fn retraining_step(
    problem: &PySaddleProblem,
    anchor: &PyDecisionPoint,
    config: &PySolverConfig,
) -> PyResult<PyDecisionPoint> {
    Ok(PyDecisionPoint {
        inner: solver::retraining_step(&problem.inner, &anchor.inner, &config.inner)
            .map_err(err)?,
    })
}

#[pyfunction]
fn online_primal_dual(
    stream: &PyProblemStream,
    z0: &PyDecisionPoint,
    config: &PySolverConfig,
) -> PyResult<PyTrajectory> {
    Ok(PyTrajectory {
        inner: solver::online_primal_dual(&stream.inner, &z0.inner, &config.inner).map_err(err)?,
    })
}

#[pyfunction]
fn online_stochastic_primal_dual(
    stream: &PyProblemStream,
    z0: &PyDecisionPoint,
    config: &PySolverConfig,
) -> PyResult<PyTrajectory> {
    Ok(PyTrajectory {
        inner: solver::online_stochastic_primal_dual(&stream.inner, &z0.inner, &config.inner)
            .map_err(err)?,
    })
}

#[pyfunction]
fn c_theta(theta: f64) -> PyResult<f64> {
    subweibull::c_theta(theta).map_err(err)
}

#[pyfunction]
fn closure_sum(a: (f64, f64), b: (f64, f64)) -> PyResult<(f64, f64)> {
    let out = subweibull::closure_sum(params(a)?, params(b)?);
    Ok((out.theta, out.nu))
}

#[pyfunction]
fn closure_product(a: (f64, f64), b: (f64, f64)) -> PyResult<(f64, f64)> {
    let out = subweibull::closure_product(params(a)?, params(b)?);
    Ok((out.theta, out.nu))
}

#[pyfunction]
fn closure_scale(a: (f64, f64), c: f64) -> PyResult<(f64, f64)> {
    let out = subweibull::closure_scale(params(a)?, c);
    Ok((out.theta, out.nu))
}

#[pyfunction]
fn tail_from_moment(theta: f64, nu: f64, epsilon: f64) -> PyResult<f64> {
    subweibull::tail_from_moment(&params((theta, nu))?, epsilon).map_err(err)
}

fn params(pair: (f64, f64)) -> PyResult<SubWeibullParams> {
    SubWeibullParams::new(pair.0, pair.1).map_err(err)
}

/// Fit (theta, nu) to non-negative samples over a theta grid.
#[pyfunction]
#[pyo3(signature = (samples, theta_grid=None))]
fn fit_subweibull(samples: Vec<f64>, theta_grid: Option<Vec<f64>>) -> PyResult<(f64, f64)> {
    let grid = theta_grid.unwrap_or_else(|| subweibull::DEFAULT_THETA_GRID.to_vec());
    let fitted = subweibull::fit_subweibull(&samples, &grid).map_err(err)?;
    Ok((fitted.theta, fitted.nu))
}

#[pyfunction]
#[pyo3(signature = (alpha, eta, drift, nu, theta, initial_error, t))]
fn expectation_bound(
    alpha: f64,
    eta: f64,
    drift: f64,
    nu: f64,
    theta: f64,
    initial_error: f64,
    t: usize,
) -> PyResult<f64> {
    let inputs = subweibull::BoundInputs::new(alpha, eta, drift, nu, theta, initial_error, 0.5)
        .map_err(err)?;
    subweibull::expectation_bound(&inputs, t).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (alpha, eta, drift, nu, theta, initial_error, delta, t))]
#[allow(clippy::too_many_arguments)]
fn high_probability_bound(
    alpha: f64,
    eta: f64,
    drift: f64,
    nu: f64,
    theta: f64,
    initial_error: f64,
    delta: f64,
    t: usize,
) -> PyResult<f64> {
    let inputs = subweibull::BoundInputs::new(alpha, eta, drift, nu, theta, initial_error, delta)
        .map_err(err)?;
    subweibull::high_probability_bound(&inputs, t).map_err(err)
}

#[pymodule]
fn eqtrack_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDecisionPoint>()?;
    m.add_class::<PyConstraintSet>()?;
    m.add_class::<PyDistributionalMap>()?;
    m.add_class::<PySaddleProblem>()?;
    m.add_class::<PyProblemStream>()?;
    m.add_class::<PySolverConfig>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyDemandSeries>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic_demand, m)?)?;
    m.add_function(wrap_pyfunction!(load_demand, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_demand, m)?)?;
    m.add_function(wrap_pyfunction!(elasticity, m)?)?;
    m.add_function(wrap_pyfunction!(build_market_stream, m)?)?;
    m.add_function(wrap_pyfunction!(default_market_spec_json, m)?)?;
    m.add_function(wrap_pyfunction!(equilibrium_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(retraining_step, m)?)?;
    m.add_function(wrap_pyfunction!(online_primal_dual, m)?)?;
    m.add_function(wrap_pyfunction!(online_stochastic_primal_dual, m)?)?;
    m.add_function(wrap_pyfunction!(c_theta, m)?)?;
    m.add_function(wrap_pyfunction!(closure_sum, m)?)?;
    m.add_function(wrap_pyfunction!(closure_product, m)?)?;
    m.add_function(wrap_pyfunction!(closure_scale, m)?)?;
    m.add_function(wrap_pyfunction!(tail_from_moment, m)?)?;
    m.add_function(wrap_pyfunction!(fit_subweibull, m)?)?;
    m.add_function(wrap_pyfunction!(expectation_bound, m)?)?;
    m.add_function(wrap_pyfunction!(high_probability_bound, m)?)?;
    Ok(())
}
