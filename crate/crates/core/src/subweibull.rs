//! Sub-Weibull moment/tail toolkit and the tracking-error bound
//! calculators.
//!
//! A non-negative random variable is sub-Weibull with tail parameter
//! `theta` and variance proxy `nu` when its p-norms satisfy
//! `||xi||_p <= nu * p^theta` for all `p >= 1`. `theta = 1/2` recovers
//! sub-Gaussian tails and `theta = 1` sub-exponential ones; larger `theta`
//! admits heavier tails.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default grid the fitter selects `theta` from.
pub const DEFAULT_THETA_GRID: [f64; 4] = [0.5, 1.0, 1.5, 2.0];

/// Highest empirical moment order used by the fitter; higher moments are
/// too unstable at desk-scale sample counts.
pub const DEFAULT_MAX_MOMENT: usize = 10;

/// Tail parameter and variance proxy certifying `||xi||_p <= nu * p^theta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubWeibullParams {
    pub theta: f64,
    pub nu: f64,
}

impl SubWeibullParams {
    /// `theta > 0`; `nu = 0` is allowed (it arises from scaling by zero).
    pub fn new(theta: f64, nu: f64) -> Result<Self> {
        if theta <= 0.0 || !theta.is_finite() {
            return Err(Error::invalid("theta must be positive and finite"));
        }
        if nu < 0.0 || !nu.is_finite() {
            return Err(Error::invalid("nu must be non-negative and finite"));
        }
        Ok(Self { theta, nu })
    }

    /// The moment bound `nu * p^theta` at order `p`.
    pub fn moment_bound(&self, p: f64) -> f64 {
        self.nu * p.powf(self.theta)
    }
}

/// The moment-to-tail conversion constant `c(theta) = (2e/theta)^theta`.
pub fn c_theta(theta: f64) -> Result<f64> {
    if theta <= 0.0 || !theta.is_finite() {
        return Err(Error::invalid("theta must be positive and finite"));
    }
    Ok((2.0 * std::f64::consts::E / theta).powf(theta))
}

/// Sum closure: `SW(max(theta1, theta2), nu1 + nu2)`.
pub fn closure_sum(a: SubWeibullParams, b: SubWeibullParams) -> SubWeibullParams {
    SubWeibullParams {
        theta: a.theta.max(b.theta),
        nu: a.nu + b.nu,
    }
}

/// Product closure: `SW(theta1 + theta2, psi(theta1, theta2) nu1 nu2)` with
/// `psi = (t1+t2)^(t1+t2) / (t1^t1 t2^t2)`.
pub fn closure_product(a: SubWeibullParams, b: SubWeibullParams) -> SubWeibullParams {
    let t = a.theta + b.theta;
    let psi = t.powf(t) / (a.theta.powf(a.theta) * b.theta.powf(b.theta));
    SubWeibullParams {
        theta: t,
        nu: psi * a.nu * b.nu,
    }
}

/// Scaling closure: `c * xi ~ SW(theta, |c| nu)`.
pub fn closure_scale(a: SubWeibullParams, c: f64) -> SubWeibullParams {
    SubWeibullParams {
        theta: a.theta,
        nu: c.abs() * a.nu,
    }
}

/// Tail bound implied by the moment characterization:
/// `P(|xi| >= eps) <= min(1, 2 exp(-(eps/nu1)^(1/theta)))` with
/// `nu1 = c(theta) nu`.
pub fn tail_from_moment(params: &SubWeibullParams, epsilon: f64) -> Result<f64> {
    if epsilon <= 0.0 || epsilon.is_nan() {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let nu1 = c_theta(params.theta)? * params.nu;
    if nu1 == 0.0 {
        return Ok(0.0);
    }
    Ok((2.0 * (-(epsilon / nu1).powf(1.0 / params.theta)).exp()).min(1.0))
}

/// Empirical p-norms `(mean of s^p)^(1/p)` for `p = 1..=max_moment`.
fn empirical_norms(samples: &[f64], max_moment: usize) -> Vec<f64> {
    let n = samples.len() as f64;
    (1..=max_moment)
        .map(|p| {
            let sum: f64 = samples.iter().map(|s| s.powi(p as i32)).sum();
            (sum / n).powf(1.0 / p as f64)
        })
        .collect()
}

/// Fit `(theta, nu)` to non-negative samples: for each grid `theta`, the
/// smallest certified proxy is `nu(theta) = max_p ||s||_p / p^theta` over
/// `p = 1..=10`; the grid point with the smallest proxy wins, ties broken
/// toward the smallest `theta`. The returned pair satisfies the moment
/// characterization on the input sample by construction.
pub fn fit_subweibull(samples: &[f64], theta_grid: &[f64]) -> Result<SubWeibullParams> {
    fit_subweibull_with(samples, theta_grid, DEFAULT_MAX_MOMENT)
}

pub fn fit_subweibull_with(
    samples: &[f64],
    theta_grid: &[f64],
    max_moment: usize,
) -> Result<SubWeibullParams> {
    if samples.len() < 100 {
        return Err(Error::invalid(format!(
            "need at least 100 samples to fit, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::invalid("samples must be finite and non-negative"));
    }
    if theta_grid.is_empty() {
        return Err(Error::invalid("theta grid must be non-empty"));
    }
    if theta_grid.iter().any(|t| *t <= 0.0 || !t.is_finite()) {
        return Err(Error::invalid("theta grid entries must be positive"));
    }
    if max_moment == 0 {
        return Err(Error::invalid("max moment must be at least 1"));
    }
    let norms = empirical_norms(samples, max_moment);
    let mut grid = theta_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut best: Option<SubWeibullParams> = None;
    for &theta in &grid {
        let nu = norms
            .iter()
            .enumerate()
            .map(|(i, norm)| norm / ((i + 1) as f64).powf(theta))
            .fold(0.0f64, f64::max);
        // strict improvement only: on ties the smaller theta (seen first) wins
        if best.is_none_or(|b| nu < b.nu) {
            best = Some(SubWeibullParams { theta, nu });
        }
    }
    let fitted = best.expect("non-empty grid");
    debug_assert!(norms
        .iter()
        .enumerate()
        .all(|(i, norm)| *norm <= fitted.moment_bound((i + 1) as f64) * (1.0 + 1e-12)));
    Ok(fitted)
}

/// Inputs to the tracking-error bound calculators.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Contraction factor `sqrt(1 - eta * gamma_hat)`, in (0, 1).
    pub alpha: f64,
    pub eta: f64,
    /// Uniform equilibrium drift bound.
    pub drift: f64,
    /// Variance proxy of the gradient error norms.
    pub nu: f64,
    /// Tail parameter of the gradient error norms.
    pub theta: f64,
    /// Initial distance `||z0 - zbar_0||`.
    pub initial_error: f64,
    /// Failure probability for the high-probability bound.
    pub delta: f64,
}

impl BoundInputs {
    pub fn new(
        alpha: f64,
        eta: f64,
        drift: f64,
        nu: f64,
        theta: f64,
        initial_error: f64,
        delta: f64,
    ) -> Result<Self> {
        if alpha <= 0.0 || alpha >= 1.0 || alpha.is_nan() {
            return Err(Error::invalid("alpha must lie in (0, 1)"));
        }
        if delta <= 0.0 || delta >= 1.0 || delta.is_nan() {
            return Err(Error::invalid("delta must lie in (0, 1)"));
        }
        if theta <= 0.0 || theta.is_nan() {
            return Err(Error::invalid("theta must be positive"));
        }
        for (name, v) in [
            ("eta", eta),
            ("drift", drift),
            ("nu", nu),
            ("initial_error", initial_error),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} must be non-negative and finite"
                )));
            }
        }
        Ok(Self {
            alpha,
            eta,
            drift,
            nu,
            theta,
            initial_error,
            delta,
        })
    }
}

/// Mean tracking-error bound
/// `alpha^t e0 + (1-alpha)^-1 drift + (1-alpha)^-1 eta nu`.
pub fn expectation_bound(inputs: &BoundInputs, t: usize) -> Result<f64> {
    if inputs.alpha >= 1.0 || inputs.alpha.is_nan() {
        return Err(Error::invalid("alpha must be below 1"));
    }
    let geom = 1.0 / (1.0 - inputs.alpha);
    Ok(inputs.alpha.powi(t as i32) * inputs.initial_error
        + geom * inputs.drift
        + geom * inputs.eta * inputs.nu)
}

/// Tracking-error bound holding with probability at least `1 - delta`:
/// `alpha^t e0 + drift/(1-alpha) + c(theta) log^theta(2/delta) eta nu / (1-alpha)`.
pub fn high_probability_bound(inputs: &BoundInputs, t: usize) -> Result<f64> {
    if inputs.delta <= 0.0 || inputs.delta >= 1.0 || inputs.delta.is_nan() {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    if inputs.alpha >= 1.0 || inputs.alpha.is_nan() {
        return Err(Error::invalid("alpha must be below 1"));
    }
    let geom = 1.0 / (1.0 - inputs.alpha);
    let log_term = (2.0 / inputs.delta).ln().powf(inputs.theta);
    Ok(inputs.alpha.powi(t as i32) * inputs.initial_error
        + geom * inputs.drift
        + c_theta(inputs.theta)? * log_term * inputs.eta * inputs.nu * geom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::RngExt;
    use rand_distr::StandardNormal;

    const E: f64 = std::f64::consts::E;

    #[test]
    fn c_theta_values() {
        assert_relative_eq!(c_theta(1.0).unwrap(), 2.0 * E, max_relative = 1e-15);
        assert_relative_eq!(c_theta(2.0 * E).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(
            c_theta(0.5).unwrap(),
            (4.0 * E).sqrt(),
            max_relative = 1e-15
        );
        assert!(c_theta(0.0).is_err());
        assert!(c_theta(-1.0).is_err());
    }

    #[test]
    fn closure_rules() {
        let sw = |theta, nu| SubWeibullParams { theta, nu };
        assert_eq!(closure_sum(sw(1.0, 1.0), sw(1.0, 2.0)), sw(1.0, 3.0));
        assert_eq!(closure_sum(sw(0.5, 1.0), sw(2.0, 1.0)), sw(2.0, 2.0));
        assert_eq!(closure_sum(sw(1.5, 2.0), sw(0.5, 0.0)), sw(1.5, 2.0));

        let p = closure_product(sw(1.0, 1.0), sw(1.0, 1.0));
        assert_eq!(p, sw(2.0, 4.0));
        let p = closure_product(sw(1.0, 1.0), sw(2.0, 1.0));
        assert_relative_eq!(p.nu, 27.0 / 4.0, max_relative = 1e-14);
        assert_eq!(p.theta, 3.0);
        assert_eq!(closure_product(sw(1.0, 3.0), sw(1.0, 0.0)).nu, 0.0);

        assert_eq!(closure_scale(sw(1.0, 2.0), -3.0), sw(1.0, 6.0));
        assert_eq!(closure_scale(sw(1.5, 2.0), 0.0), sw(1.5, 0.0));
        assert_eq!(closure_scale(sw(1.5, 2.0), 1.0), sw(1.5, 2.0));
    }

    #[test]
    fn tail_from_moment_examples() {
        let sw = SubWeibullParams {
            theta: 1.0,
            nu: 1.0,
        };
        // tiny epsilon: bound exceeds 1 and is clamped
        assert_eq!(tail_from_moment(&sw, 1e-12).unwrap(), 1.0);
        // boundary where the raw bound hits exactly 1
        let eps = 2.0 * E * (2.0f64).ln();
        assert_relative_eq!(
            tail_from_moment(&sw, eps).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        // invert the tail formula: eps = 2e log(200) -> 2/200
        let eps = 2.0 * E * (200.0f64).ln();
        assert_relative_eq!(
            tail_from_moment(&sw, eps).unwrap(),
            0.01,
            max_relative = 1e-12
        );
        assert!(tail_from_moment(&sw, 0.0).is_err());
    }

    #[test]
    fn fit_constant_samples_ties_to_smallest_theta() {
        let samples = vec![2.5; 200];
        let fitted = fit_subweibull(&samples, &DEFAULT_THETA_GRID).unwrap();
        assert_eq!(fitted.theta, 0.5);
        assert_relative_eq!(fitted.nu, 2.5, max_relative = 1e-12);
    }

    #[test]
    fn fit_half_normal_selects_sub_gaussian() {
        let mut rng = stream_rng(101, &[0]);
        let samples: Vec<f64> = (0..20_000)
            .map(|_| rng.sample::<f64, _>(StandardNormal).abs())
            .collect();
        let fitted = fit_subweibull(&samples, &DEFAULT_THETA_GRID).unwrap();
        assert_eq!(fitted.theta, 0.5);
        // nu is pinned by the first moment, E|N(0,1)| = sqrt(2/pi)
        assert_relative_eq!(
            fitted.nu,
            (2.0 / std::f64::consts::PI).sqrt(),
            max_relative = 0.05
        );
    }

    #[test]
    fn fit_heavy_weibull_selects_theta_two() {
        // Weibull with shape 1/2: X = E^2 for E ~ Exp(1); p-norms grow ~ p^2
        let mut rng = stream_rng(202, &[0]);
        let samples: Vec<f64> = (0..10_000)
            .map(|_| {
                let u: f64 = rng.random::<f64>();
                let e = -(1.0 - u).ln();
                e * e
            })
            .collect();
        let fitted = fit_subweibull(&samples, &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(fitted.theta, 2.0);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_subweibull(&[1.0; 50], &DEFAULT_THETA_GRID).is_err());
        assert!(fit_subweibull(&vec![-1.0; 200], &DEFAULT_THETA_GRID).is_err());
        assert!(fit_subweibull(&vec![1.0; 200], &[]).is_err());
    }

    #[test]
    fn expectation_bound_examples() {
        // nu = 0, drift = 0: pure geometric decay
        let inputs = BoundInputs::new(0.9, 0.1, 0.0, 0.0, 1.0, 1.0, 0.5).unwrap();
        assert_relative_eq!(
            expectation_bound(&inputs, 7).unwrap(),
            0.9f64.powi(7),
            max_relative = 1e-14
        );
        // large t: geometric term vanishes
        let inputs = BoundInputs::new(0.9, 0.1, 0.02, 0.5, 1.0, 1.0, 0.5).unwrap();
        let asymptote = (0.02 + 0.1 * 0.5) / 0.1;
        assert_relative_eq!(
            expectation_bound(&inputs, 10_000).unwrap(),
            asymptote,
            max_relative = 1e-12
        );
        // frozen arithmetic case
        let inputs = BoundInputs::new(0.9, 0.1, 0.01, 1.0, 1.0, 1.0, 0.5).unwrap();
        assert_relative_eq!(
            expectation_bound(&inputs, 10).unwrap(),
            1.448_678_440_1,
            max_relative = 1e-9
        );
    }

    #[test]
    fn high_probability_bound_examples() {
        // delta = 2/e makes the log factor exactly 1
        let inputs = BoundInputs::new(0.9, 0.1, 0.0, 1.0, 1.0, 0.0, 2.0 / E).unwrap();
        assert_relative_eq!(
            high_probability_bound(&inputs, 3).unwrap(),
            2.0 * E * 0.1 * 1.0 / 0.1,
            max_relative = 1e-12
        );
        // nu = 0 reduces to the deterministic bound
        let inputs = BoundInputs::new(0.9, 0.1, 0.02, 0.0, 1.0, 1.0, 0.05).unwrap();
        assert_relative_eq!(
            high_probability_bound(&inputs, 4).unwrap(),
            expectation_bound(&inputs, 4).unwrap(),
            max_relative = 1e-14
        );
        // frozen arithmetic case: 2e log(40) with all other terms zero
        let inputs = BoundInputs::new(0.9, 0.1, 0.0, 1.0, 1.0, 0.0, 0.05).unwrap();
        assert_relative_eq!(
            high_probability_bound(&inputs, 12).unwrap(),
            2.0 * E * (40.0f64).ln(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            high_probability_bound(&inputs, 12).unwrap(),
            20.054_828,
            max_relative = 1e-6
        );
    }

    #[test]
    fn bound_inputs_validation() {
        assert!(BoundInputs::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.5).is_err());
        assert!(BoundInputs::new(0.5, 0.1, 0.0, 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(BoundInputs::new(0.5, -0.1, 0.0, 0.0, 1.0, 0.0, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn bounds_monotone(
            alpha in 0.05f64..0.95,
            eta in 1e-3f64..0.5,
            drift in 0.0f64..0.5,
            nu in 0.0f64..2.0,
            theta in 0.25f64..2.0,
            e0 in 0.0f64..5.0,
            delta in 0.01f64..0.5,
            t in 0usize..200,
        ) {
            let inputs = BoundInputs::new(alpha, eta, drift, nu, theta, e0, delta).unwrap();
            let exp_t = expectation_bound(&inputs, t).unwrap();
            let hp_t = high_probability_bound(&inputs, t).unwrap();
            // non-increasing in t
            prop_assert!(expectation_bound(&inputs, t + 1).unwrap() <= exp_t + 1e-12);
            prop_assert!(high_probability_bound(&inputs, t + 1).unwrap() <= hp_t + 1e-12);
            // increasing in nu, drift and (noise term) eta
            let bump = |f: &dyn Fn(&BoundInputs) -> BoundInputs| {
                let b = f(&inputs);
                (expectation_bound(&b, t).unwrap(), high_probability_bound(&b, t).unwrap())
            };
            let (e, h) = bump(&|i| BoundInputs { nu: i.nu + 0.5, ..*i });
            prop_assert!(e >= exp_t - 1e-12 && h >= hp_t - 1e-12);
            let (e, h) = bump(&|i| BoundInputs { drift: i.drift + 0.5, ..*i });
            prop_assert!(e >= exp_t - 1e-12 && h >= hp_t - 1e-12);
            if nu > 0.0 {
                let noisier = BoundInputs { eta: eta * 2.0, ..inputs };
                let noise_term = |i: &BoundInputs| i.eta * i.nu / (1.0 - i.alpha);
                prop_assert!(noise_term(&noisier) >= noise_term(&inputs));
            }
        }

        #[test]
        fn fitted_params_certify_sample_moments(seed in 0u64..32) {
            let mut rng = stream_rng(seed, &[9]);
            let samples: Vec<f64> = (0..500)
                .map(|_| rng.sample::<f64, _>(StandardNormal).abs() * 2.0 + 0.1)
                .collect();
            let fitted = fit_subweibull(&samples, &DEFAULT_THETA_GRID).unwrap();
            let n = samples.len() as f64;
            for p in 1..=DEFAULT_MAX_MOMENT {
                let norm = (samples.iter().map(|s| s.powi(p as i32)).sum::<f64>() / n)
                    .powf(1.0 / p as f64);
                prop_assert!(norm <= fitted.moment_bound(p as f64) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn empirical_tail_never_exceeds_converted_bound() {
        let mut rng = stream_rng(7, &[4]);
        let samples: Vec<f64> = (0..50_000)
            .map(|_| rng.sample::<f64, _>(StandardNormal).abs())
            .collect();
        let fitted = fit_subweibull(&samples, &DEFAULT_THETA_GRID).unwrap();
        let n = samples.len() as f64;
        let max = samples.iter().fold(0.0f64, |a, b| a.max(*b));
        for i in 1..=20 {
            let eps = max * i as f64 / 20.0;
            let freq = samples.iter().filter(|s| **s >= eps).count() as f64 / n;
            let bound = tail_from_moment(&fitted, eps).unwrap();
            // Monte Carlo slack on the empirical frequency
            assert!(freq <= bound + 3.0 * (bound.max(1e-4) / n).sqrt());
        }
    }

    #[test]
    fn closure_params_certify_combined_samples() {
        let mut rng = stream_rng(55, &[1]);
        let a: Vec<f64> = (0..20_000)
            .map(|_| rng.sample::<f64, _>(StandardNormal).abs())
            .collect();
        let b: Vec<f64> = (0..20_000)
            .map(|_| {
                let u: f64 = rng.random::<f64>();
                -(1.0 - u).ln()
            })
            .collect();
        let pa = fit_subweibull(&a, &DEFAULT_THETA_GRID).unwrap();
        let pb = fit_subweibull(&b, &DEFAULT_THETA_GRID).unwrap();
        let check = |samples: &[f64], params: SubWeibullParams| {
            let n = samples.len() as f64;
            for p in 1..=DEFAULT_MAX_MOMENT {
                let norm = (samples.iter().map(|s| s.powi(p as i32)).sum::<f64>() / n)
                    .powf(1.0 / p as f64);
                assert!(
                    norm <= params.moment_bound(p as f64) * (1.0 + 1e-9),
                    "p = {p}: {norm} > {}",
                    params.moment_bound(p as f64)
                );
            }
        };
        let sums: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        check(&sums, closure_sum(pa, pb));
        let products: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        check(&products, closure_product(pa, pb));
        let scaled: Vec<f64> = a.iter().map(|x| 3.0 * x).collect();
        check(&scaled, closure_scale(pa, 3.0));
    }
}
