//! Location-scale distributional maps `z -> law(w0 + M z)`.
//!
//! The base noise `w0` is Gaussian or empirical; the decision enters only
//! through the location shift `M z`, which makes both the mean of the map
//! and its Wasserstein-1 Lipschitz constant (`||M||_2`) exact.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::problem::DecisionPoint;
use crate::rng::stream_rng;
use crate::serde_helpers;

/// Base distribution of the location part `w0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BaseDistribution {
    Gaussian {
        #[serde(with = "serde_helpers::vector")]
        mean: DVector<f64>,
        #[serde(with = "serde_helpers::matrix")]
        covariance: DMatrix<f64>,
    },
    /// Resamples rows uniformly with replacement.
    Empirical {
        #[serde(with = "serde_helpers::matrix")]
        samples: DMatrix<f64>,
    },
}

impl BaseDistribution {
    pub fn gaussian(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let k = mean.len();
        if covariance.shape() != (k, k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: covariance.nrows(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) || covariance.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("gaussian base needs finite parameters"));
        }
        Ok(Self::Gaussian { mean, covariance })
    }

    /// Gaussian with covariance `sigma^2 I`.
    pub fn isotropic_gaussian(mean: DVector<f64>, sigma: f64) -> Result<Self> {
        if sigma < 0.0 || !sigma.is_finite() {
            return Err(Error::invalid("sigma must be finite and non-negative"));
        }
        let k = mean.len();
        Self::gaussian(mean, DMatrix::identity(k, k) * (sigma * sigma))
    }

    /// Deterministic base concentrated at `point`.
    pub fn point_mass(point: DVector<f64>) -> Self {
        let k = point.len();
        Self::Gaussian {
            mean: point,
            covariance: DMatrix::zeros(k, k),
        }
    }

    pub fn empirical(samples: DMatrix<f64>) -> Result<Self> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::invalid(
                "empirical base needs at least one stored sample",
            ));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("empirical base needs finite samples"));
        }
        Ok(Self::Empirical { samples })
    }

    /// Load an empirical base from a CSV file: rows are observations,
    /// columns are coordinates of `w`.
    pub fn empirical_from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path.as_ref())?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|cell| {
                    cell.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::invalid(format!("non-numeric cell {cell:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(Error::invalid("csv rows have unequal lengths"));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::invalid(
                "empirical base needs at least one stored sample",
            ));
        }
        let ncols = rows[0].len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Self::empirical(DMatrix::from_row_slice(flat.len() / ncols, ncols, &flat))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { mean, .. } => mean.len(),
            Self::Empirical { samples } => samples.ncols(),
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        match self {
            Self::Gaussian { mean, .. } => mean.clone(),
            Self::Empirical { samples } => samples.row_mean().transpose(),
        }
    }
}

/// Symmetric PSD square root via the spectral decomposition; small negative
/// eigenvalues from rounding are clamped at zero.
fn psd_factor(covariance: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (covariance + covariance.transpose()) / 2.0;
    let scale = sym.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let eig = nalgebra::SymmetricEigen::new(sym);
    let tol = -1e-9 * scale.max(1.0);
    if eig.eigenvalues.iter().any(|&l| l < tol) {
        return Err(Error::invalid("covariance must be positive semi-definite"));
    }
    let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * sqrt * eig.eigenvectors.transpose())
}

/// Decision-to-distribution rule `D(z) = law(w0 + M z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionalMapRepr")]
pub struct DistributionalMap {
    base: BaseDistribution,
    #[serde(with = "serde_helpers::matrix")]
    shift: DMatrix<f64>,
    #[serde(skip)]
    epsilon: f64,
    #[serde(skip)]
    base_mean: DVector<f64>,
    #[serde(skip)]
    gaussian_factor: Option<DMatrix<f64>>,
}

#[derive(Deserialize)]
struct DistributionalMapRepr {
    base: BaseDistribution,
    #[serde(with = "serde_helpers::matrix")]
    shift: DMatrix<f64>,
}

impl TryFrom<DistributionalMapRepr> for DistributionalMap {
    type Error = Error;

    fn try_from(r: DistributionalMapRepr) -> Result<Self> {
        Self::new(r.base, r.shift)
    }
}

impl DistributionalMap {
    /// `shift` is the `k x (n + m)` matrix `M`.
    pub fn new(base: BaseDistribution, shift: DMatrix<f64>) -> Result<Self> {
        if shift.nrows() != base.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                actual: shift.nrows(),
            });
        }
        if shift.ncols() == 0 {
            return Err(Error::invalid("shift matrix needs at least one column"));
        }
        if shift.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("shift matrix must be finite"));
        }
        let epsilon = if shift.iter().all(|v| *v == 0.0) {
            0.0
        } else {
            shift.singular_values().max()
        };
        let base_mean = base.mean();
        let gaussian_factor = match &base {
            BaseDistribution::Gaussian { covariance, .. } => Some(psd_factor(covariance)?),
            BaseDistribution::Empirical { .. } => None,
        };
        Ok(Self {
            base,
            shift,
            epsilon,
            base_mean,
            gaussian_factor,
        })
    }

    /// A map that ignores the decision (`M = 0`).
    pub fn constant(base: BaseDistribution, decision_dim: usize) -> Result<Self> {
        let k = base.dim();
        Self::new(base, DMatrix::zeros(k, decision_dim))
    }

    pub fn base(&self) -> &BaseDistribution {
        &self.base
    }

    pub fn shift_matrix(&self) -> &DMatrix<f64> {
        &self.shift
    }

    /// Dimension `n + m` of the decision the map responds to.
    pub fn decision_dim(&self) -> usize {
        self.shift.ncols()
    }

    /// Dimension `k` of the data vector `w`.
    pub fn noise_dim(&self) -> usize {
        self.shift.nrows()
    }

    pub(crate) fn base_mean(&self) -> &DVector<f64> {
        &self.base_mean
    }

    /// The Wasserstein-1 Lipschitz constant `||M||_2`: with the shared-noise
    /// coupling, `W1(D(z), D(z')) <= ||M(z - z')|| <= ||M||_2 ||z - z'||`.
    pub fn lipschitz_constant(&self) -> f64 {
        self.epsilon
    }

    /// Mean of `D(z)`: `E[w0] + M z`, exact.
    pub fn mean_shift(&self, z: &DecisionPoint) -> Result<DVector<f64>> {
        self.check_decision(z)?;
        Ok(&self.base_mean + &self.shift * z.stacked())
    }

    /// `count` i.i.d. draws from `D(z)` as rows of a `count x k` matrix;
    /// deterministic given the seed.
    pub fn sample(&self, z: &DecisionPoint, count: usize, seed: u64) -> Result<DMatrix<f64>> {
        let mut rng = stream_rng(seed, &[]);
        self.sample_with_rng(z, count, &mut rng)
    }

    pub fn sample_with_rng(
        &self,
        z: &DecisionPoint,
        count: usize,
        rng: &mut impl Rng,
    ) -> Result<DMatrix<f64>> {
        self.check_sampling(z, count)?;
        let k = self.noise_dim();
        let location = &self.shift * z.stacked();
        let mut out = DMatrix::zeros(count, k);
        let mut draw = DVector::zeros(k);
        for i in 0..count {
            self.draw_into(&location, rng, &mut draw);
            out.row_mut(i).tr_copy_from(&draw);
        }
        Ok(out)
    }

    /// Mean of `count` i.i.d. draws, without materializing the sample matrix.
    /// Uses the same draw order as [`sample_with_rng`](Self::sample_with_rng).
    pub fn sample_mean_with_rng(
        &self,
        z: &DecisionPoint,
        count: usize,
        rng: &mut impl Rng,
    ) -> Result<DVector<f64>> {
        self.check_sampling(z, count)?;
        let k = self.noise_dim();
        let location = &self.shift * z.stacked();
        let mut acc = DVector::zeros(k);
        let mut draw = DVector::zeros(k);
        for _ in 0..count {
            self.draw_into(&location, rng, &mut draw);
            acc += &draw;
        }
        Ok(acc / count as f64)
    }

    fn draw_into(&self, location: &DVector<f64>, rng: &mut impl Rng, out: &mut DVector<f64>) {
        match &self.base {
            BaseDistribution::Gaussian { mean, .. } => {
                let factor = self
                    .gaussian_factor
                    .as_ref()
                    .expect("factor precomputed for gaussian bases");
                let xi = DVector::from_fn(out.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                out.copy_from(mean);
                out.gemv(1.0, factor, &xi, 1.0);
                *out += location;
            }
            BaseDistribution::Empirical { samples } => {
                let idx = rng.random_range(0..samples.nrows());
                out.tr_copy_from(&samples.row(idx));
                *out += location;
            }
        }
    }

    fn check_decision(&self, z: &DecisionPoint) -> Result<()> {
        if z.len() != self.decision_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.decision_dim(),
                actual: z.len(),
            });
        }
        Ok(())
    }

    fn check_sampling(&self, z: &DecisionPoint, count: usize) -> Result<()> {
        self.check_decision(z)?;
        if count == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        Ok(())
    }
}
