//! Ready-made problem instances and streams used by experiments and tests.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;

use crate::distribution::{BaseDistribution, DistributionalMap};
use crate::error::Result;
use crate::problem::{ConstraintSet, ProblemStream, QuadraticObjective, SaddleProblem};
use crate::rng::stream_rng;

/// Scalar prototype problem `f = 1/2 x^2 - 1/2 y^2 - w x` with
/// `w ~ N(mu0 + eps * x, sigma^2)` on the box `[-half_width, half_width]^2`.
///
/// Its equilibrium is `x = mu0 / (1 - eps)`, `y = 0` whenever that point is
/// interior.
pub fn scalar_problem(
    mu0: f64,
    epsilon: f64,
    noise_sigma: f64,
    half_width: f64,
) -> Result<SaddleProblem> {
    let base = BaseDistribution::isotropic_gaussian(DVector::from_element(1, mu0), noise_sigma)?;
    let shift = DMatrix::from_row_slice(1, 2, &[epsilon, 0.0]);
    SaddleProblem::new(
        QuadraticObjective::scalar_prototype(),
        ConstraintSet::centered_box(1, half_width)?,
        ConstraintSet::centered_box(1, half_width)?,
        DistributionalMap::new(base, shift)?,
    )
}

/// The scalar problem repeated for `horizon` steps (zero drift).
pub fn scalar_static_stream(
    mu0: f64,
    epsilon: f64,
    noise_sigma: f64,
    half_width: f64,
    horizon: usize,
) -> Result<ProblemStream> {
    ProblemStream::constant(
        scalar_problem(mu0, epsilon, noise_sigma, half_width)?,
        horizon,
    )
}

/// Scalar stream whose location parameter drifts sinusoidally:
/// `mu0(t) = mu0_base + amplitude * sin(2 pi t / period)`.
pub fn scalar_drift_stream(
    mu0_base: f64,
    amplitude: f64,
    period: f64,
    epsilon: f64,
    noise_sigma: f64,
    half_width: f64,
    horizon: usize,
) -> Result<ProblemStream> {
    ProblemStream::from_fn(horizon, |t| {
        let mu0 = mu0_base + amplitude * (2.0 * std::f64::consts::PI * t as f64 / period).sin();
        scalar_problem(mu0, epsilon, noise_sigma, half_width)
    })
}

fn random_spd(dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal))
        / (dim as f64).sqrt();
    &a * a.transpose() + DMatrix::identity(dim, dim) * 0.3
}

/// A random well-posed problem with the coupling ratio `epsilon L / gamma`
/// pinned to `rho` (any value in `[0, 1)` keeps the stream contractive).
pub fn random_problem(
    n: usize,
    m: usize,
    noise_dim: usize,
    rho: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<SaddleProblem> {
    let mut rng = stream_rng(seed, &[0x5eed]);
    let objective = QuadraticObjective::new(
        random_spd(n, &mut rng),
        random_spd(m, &mut rng),
        DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal)) * 0.3,
        DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)) * 0.2,
        DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal)) * 0.2,
        DMatrix::from_fn(n, noise_dim, |_, _| rng.sample::<f64, _>(StandardNormal)) * 0.5,
        DMatrix::from_fn(m, noise_dim, |_, _| rng.sample::<f64, _>(StandardNormal)) * 0.5,
    )?;
    let gamma = objective.strong_convexity();
    let lipschitz = objective.smoothness();
    let shift = if rho == 0.0 {
        DMatrix::zeros(noise_dim, n + m)
    } else {
        let raw = DMatrix::from_fn(noise_dim, n + m, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let spectral = raw.singular_values().max();
        raw * (rho * gamma / lipschitz / spectral)
    };
    let mean = DVector::from_fn(noise_dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let base = BaseDistribution::isotropic_gaussian(mean, noise_sigma)?;
    SaddleProblem::new(
        objective,
        ConstraintSet::centered_box(n, 100.0)?,
        ConstraintSet::centered_box(m, 100.0)?,
        DistributionalMap::new(base, shift)?,
    )
}
