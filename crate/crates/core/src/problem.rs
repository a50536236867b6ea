//! Decision variables, constraint sets with closed-form projections, the
//! quadratic saddle objective family, and its gradient maps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distribution::DistributionalMap;
use crate::error::{Error, Result};
use crate::serde_helpers;

/// Stacked primal-dual decision variable `z = (x, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoint {
    #[serde(with = "serde_helpers::vector")]
    pub x: DVector<f64>,
    #[serde(with = "serde_helpers::vector")]
    pub y: DVector<f64>,
}

impl DecisionPoint {
    pub fn new(x: DVector<f64>, y: DVector<f64>) -> Self {
        Self { x, y }
    }

    pub fn from_slices(x: &[f64], y: &[f64]) -> Self {
        Self::new(DVector::from_row_slice(x), DVector::from_row_slice(y))
    }

    /// Split a stacked vector of length `n + m` back into `(x, y)`.
    pub fn from_stacked(z: &DVector<f64>, n: usize, m: usize) -> Result<Self> {
        if z.len() != n + m {
            return Err(Error::DimensionMismatch {
                expected: n + m,
                actual: z.len(),
            });
        }
        Ok(Self::new(
            z.rows(0, n).into_owned(),
            z.rows(n, m).into_owned(),
        ))
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.x.len();
        let m = self.y.len();
        let mut z = DVector::zeros(n + m);
        z.rows_mut(0, n).copy_from(&self.x);
        z.rows_mut(n, m).copy_from(&self.y);
        z
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.x.len(), self.y.len())
    }

    pub fn len(&self) -> usize {
        self.x.len() + self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Euclidean distance between stacked points; panics on mismatched dims.
    pub fn distance(&self, other: &Self) -> f64 {
        ((&self.x - &other.x).norm_squared() + (&self.y - &other.y).norm_squared()).sqrt()
    }
}

/// Convex compact constraint set with a closed-form Euclidean projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSet {
    Box {
        #[serde(with = "serde_helpers::vector")]
        lower: DVector<f64>,
        #[serde(with = "serde_helpers::vector")]
        upper: DVector<f64>,
    },
    Ball {
        #[serde(with = "serde_helpers::vector")]
        center: DVector<f64>,
        radius: f64,
    },
}

impl ConstraintSet {
    pub fn box_set(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::invalid("box must have positive dimension"));
        }
        for i in 0..lower.len() {
            if !lower[i].is_finite() || !upper[i].is_finite() || lower[i] > upper[i] {
                return Err(Error::invalid(format!(
                    "box bounds must be finite with lower <= upper (component {i})"
                )));
            }
        }
        Ok(Self::Box { lower, upper })
    }

    /// Symmetric box `[-half_width, half_width]^dim`.
    pub fn centered_box(dim: usize, half_width: f64) -> Result<Self> {
        if half_width <= 0.0 || !half_width.is_finite() {
            return Err(Error::invalid("box half-width must be positive"));
        }
        Self::box_set(
            DVector::from_element(dim, -half_width),
            DVector::from_element(dim, half_width),
        )
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::invalid("ball must have positive dimension"));
        }
        if !radius.is_finite() || radius <= 0.0 || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("ball needs finite center and radius > 0"));
        }
        Ok(Self::Ball { center, radius })
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::Box { lower, .. } => lower.len(),
            Self::Ball { center, .. } => center.len(),
        }
    }

    /// Euclidean projection onto the set. Idempotent; interior points are
    /// fixed points.
    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                actual: v.len(),
            });
        }
        let mut out = v.clone();
        self.project_in_place(&mut out);
        Ok(out)
    }

    pub(crate) fn project_in_place(&self, v: &mut DVector<f64>) {
        match self {
            Self::Box { lower, upper } => {
                for i in 0..v.len() {
                    v[i] = v[i].clamp(lower[i], upper[i]);
                }
            }
            Self::Ball { center, radius } => {
                let mut dist_sq = 0.0;
                for i in 0..v.len() {
                    let d = v[i] - center[i];
                    dist_sq += d * d;
                }
                let dist = dist_sq.sqrt();
                if dist > *radius {
                    let scale = *radius / dist;
                    for i in 0..v.len() {
                        v[i] = center[i] + (v[i] - center[i]) * scale;
                    }
                }
            }
        }
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        if v.len() != self.dimension() {
            return false;
        }
        match self {
            Self::Box { lower, upper } => {
                (0..v.len()).all(|i| v[i] >= lower[i] - tol && v[i] <= upper[i] + tol)
            }
            Self::Ball { center, radius } => (v - center).norm() <= radius + tol,
        }
    }

    /// A canonical interior point (box midpoint or ball center); used to
    /// start oracle iterations.
    pub fn midpoint(&self) -> DVector<f64> {
        match self {
            Self::Box { lower, upper } => (lower + upper) / 2.0,
            Self::Ball { center, .. } => center.clone(),
        }
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) / 2.0
}

fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.min()
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    m.singular_values().max()
}

/// Stochastic gradient oracle `g(z, w) = (grad_x f, -grad_y f)` for a
/// saddle objective. The built-in quadratic family implements it in closed
/// form; user-supplied families can plug in their own.
pub trait GradientOracle {
    /// Primal and dual dimensions `(n, m)`.
    fn dims(&self) -> (usize, usize);
    /// Dimension `k` of the data vector `w`.
    fn noise_dim(&self) -> usize;
    fn stochastic_gradient(&self, z: &DecisionPoint, w: &DVector<f64>) -> Result<DVector<f64>>;
}

/// Quadratic saddle objective, affine in the data vector `w`:
///
/// ```text
/// f(x, y, w) = 1/2 x'Qx - 1/2 y'Ry + x'Cy
///            + q'x + r'y + (Sx w)'x + (Sy w)'y
/// ```
///
/// `Q` and `R` are symmetric positive definite, so `f` is strongly convex
/// in `x` and strongly concave in `y` for every realization of `w`, and
/// the gradient map `g(z, w) = (grad_x f, -grad_y f)` is affine in both
/// arguments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuadraticObjectiveRepr")]
pub struct QuadraticObjective {
    #[serde(with = "serde_helpers::matrix")]
    curvature_x: DMatrix<f64>,
    #[serde(with = "serde_helpers::matrix")]
    curvature_y: DMatrix<f64>,
    #[serde(with = "serde_helpers::matrix")]
    coupling: DMatrix<f64>,
    #[serde(with = "serde_helpers::vector")]
    linear_x: DVector<f64>,
    #[serde(with = "serde_helpers::vector")]
    linear_y: DVector<f64>,
    #[serde(with = "serde_helpers::matrix")]
    noise_x: DMatrix<f64>,
    #[serde(with = "serde_helpers::matrix")]
    noise_y: DMatrix<f64>,
}

#[derive(Deserialize)]
struct QuadraticObjectiveRepr {
    #[serde(with = "serde_helpers::matrix")]
    curvature_x: DMatrix<f64>,
    #[serde(with = "serde_helpers::matrix")]
    curvature_y: DMatrix<f64>,
    #[serde(with = "serde_helpers::matrix")]
    coupling: DMatrix<f64>,
    #[serde(with = "serde_helpers::vector")]
    linear_x: DVector<f64>,
    #[serde(with = "serde_helpers::vector")]
    linear_y: DVector<f64>,
    #[serde(with = "serde_helpers::matrix")]
    noise_x: DMatrix<f64>,
    #[serde(with = "serde_helpers::matrix")]
    noise_y: DMatrix<f64>,
}

impl TryFrom<QuadraticObjectiveRepr> for QuadraticObjective {
    type Error = Error;

    fn try_from(r: QuadraticObjectiveRepr) -> Result<Self> {
        Self::new(
            r.curvature_x,
            r.curvature_y,
            r.coupling,
            r.linear_x,
            r.linear_y,
            r.noise_x,
            r.noise_y,
        )
    }
}

impl QuadraticObjective {
    pub fn new(
        curvature_x: DMatrix<f64>,
        curvature_y: DMatrix<f64>,
        coupling: DMatrix<f64>,
        linear_x: DVector<f64>,
        linear_y: DVector<f64>,
        noise_x: DMatrix<f64>,
        noise_y: DMatrix<f64>,
    ) -> Result<Self> {
        let n = curvature_x.nrows();
        let m = curvature_y.nrows();
        let k = noise_x.ncols();
        if n == 0 || m == 0 || k == 0 {
            return Err(Error::invalid("objective dimensions must be positive"));
        }
        let dims_ok = curvature_x.ncols() == n
            && curvature_y.ncols() == m
            && coupling.shape() == (n, m)
            && linear_x.len() == n
            && linear_y.len() == m
            && noise_x.shape() == (n, k)
            && noise_y.shape() == (m, k);
        if !dims_ok {
            return Err(Error::invalid("objective blocks have inconsistent shapes"));
        }
        // x'Qx only sees the symmetric part, so symmetrizing is exact.
        let curvature_x = symmetrize(&curvature_x);
        let curvature_y = symmetrize(&curvature_y);
        if min_symmetric_eigenvalue(&curvature_x) <= 0.0
            || min_symmetric_eigenvalue(&curvature_y) <= 0.0
        {
            return Err(Error::invalid(
                "curvature blocks must be positive definite (strong convexity/concavity)",
            ));
        }
        Ok(Self {
            curvature_x,
            curvature_y,
            coupling,
            linear_x,
            linear_y,
            noise_x,
            noise_y,
        })
    }

    /// Market-revenue form with `w = (a, b)` stacked:
    ///
    /// ```text
    /// f = ||G1 x||^2 - ||G2 y||^2 - <a + c, x> + <b + c, y>
    /// ```
    pub fn market(
        gamma1: &DMatrix<f64>,
        gamma2: &DMatrix<f64>,
        location_utility: &DVector<f64>,
    ) -> Result<Self> {
        let n = gamma1.ncols();
        if gamma1.nrows() != n || gamma2.shape() != (n, n) || location_utility.len() != n {
            return Err(Error::invalid(
                "market form needs square utility matrices and a matching location vector",
            ));
        }
        let eye = DMatrix::<f64>::identity(n, n);
        let mut noise_x = DMatrix::zeros(n, 2 * n);
        noise_x.view_mut((0, 0), (n, n)).copy_from(&(-&eye));
        let mut noise_y = DMatrix::zeros(n, 2 * n);
        noise_y.view_mut((0, n), (n, n)).copy_from(&eye);
        Self::new(
            2.0 * gamma1.transpose() * gamma1,
            2.0 * gamma2.transpose() * gamma2,
            DMatrix::zeros(n, n),
            -location_utility,
            location_utility.clone(),
            noise_x,
            noise_y,
        )
    }

    /// Scalar prototype `f = 1/2 x^2 - 1/2 y^2 - w x` with `n = m = k = 1`.
    pub fn scalar_prototype() -> Self {
        Self::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::zeros(1, 1),
        )
        .expect("scalar prototype is valid")
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.curvature_x.nrows(), self.curvature_y.nrows())
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_x.ncols()
    }

    /// Objective value `f(x, y, w)`.
    pub fn value(&self, z: &DecisionPoint, w: &DVector<f64>) -> Result<f64> {
        self.check_dims(z, w)?;
        let x = &z.x;
        let y = &z.y;
        let quad = 0.5 * x.dot(&(&self.curvature_x * x)) - 0.5 * y.dot(&(&self.curvature_y * y))
            + x.dot(&(&self.coupling * y));
        let lin = self.linear_x.dot(x) + self.linear_y.dot(y);
        let noise = x.dot(&(&self.noise_x * w)) + y.dot(&(&self.noise_y * w));
        Ok(quad + lin + noise)
    }

    /// Stacked gradient map `g(z, w) = (grad_x f, -grad_y f)`; the sign flip
    /// on the dual block turns the saddle dynamics into a monotone map.
    pub fn gradient_map(&self, z: &DecisionPoint, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims(z, w)?;
        let gx =
            &self.curvature_x * &z.x + &self.coupling * &z.y + &self.linear_x + &self.noise_x * w;
        let gy = &self.curvature_y * &z.y
            - self.coupling.transpose() * &z.x
            - &self.linear_y
            - &self.noise_y * w;
        let (n, m) = self.dims();
        let mut g = DVector::zeros(n + m);
        g.rows_mut(0, n).copy_from(&gx);
        g.rows_mut(n, m).copy_from(&gy);
        Ok(g)
    }

    fn check_dims(&self, z: &DecisionPoint, w: &DVector<f64>) -> Result<()> {
        let (n, m) = self.dims();
        if z.dims() != (n, m) {
            return Err(Error::DimensionMismatch {
                expected: n + m,
                actual: z.len(),
            });
        }
        if w.len() != self.noise_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.noise_dim(),
                actual: w.len(),
            });
        }
        Ok(())
    }

    /// Jacobian of `g` in `z`: `J = [[Q, C], [-C', R]]`.
    pub fn jacobian_z(&self) -> DMatrix<f64> {
        let (n, m) = self.dims();
        let mut j = DMatrix::zeros(n + m, n + m);
        j.view_mut((0, 0), (n, n)).copy_from(&self.curvature_x);
        j.view_mut((0, n), (n, m)).copy_from(&self.coupling);
        j.view_mut((n, 0), (m, n))
            .copy_from(&(-self.coupling.transpose()));
        j.view_mut((n, n), (m, m)).copy_from(&self.curvature_y);
        j
    }

    /// Jacobian of `g` in `w`: `K = [Sx; -Sy]`.
    pub fn noise_jacobian(&self) -> DMatrix<f64> {
        let (n, m) = self.dims();
        let k = self.noise_dim();
        let mut kk = DMatrix::zeros(n + m, k);
        kk.view_mut((0, 0), (n, k)).copy_from(&self.noise_x);
        kk.view_mut((n, 0), (m, k)).copy_from(&(-&self.noise_y));
        kk
    }

    /// Constant term of `g`: `(q, -r)`.
    pub fn linear_term(&self) -> DVector<f64> {
        let (n, m) = self.dims();
        let mut b = DVector::zeros(n + m);
        b.rows_mut(0, n).copy_from(&self.linear_x);
        b.rows_mut(n, m).copy_from(&(-&self.linear_y));
        b
    }

    /// Strong convexity/concavity modulus: the smallest eigenvalue over the
    /// two curvature blocks.
    pub fn strong_convexity(&self) -> f64 {
        min_symmetric_eigenvalue(&self.curvature_x).min(min_symmetric_eigenvalue(&self.curvature_y))
    }

    /// Joint smoothness: the larger of the spectral norms of the z- and
    /// w-Jacobians of `g`.
    pub fn smoothness(&self) -> f64 {
        spectral_norm(&self.jacobian_z()).max(spectral_norm(&self.noise_jacobian()))
    }
}

impl GradientOracle for QuadraticObjective {
    fn dims(&self) -> (usize, usize) {
        self.dims()
    }

    fn noise_dim(&self) -> usize {
        self.noise_dim()
    }

    fn stochastic_gradient(&self, z: &DecisionPoint, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.gradient_map(z, w)
    }
}

/// Contraction constants of the coupled gradient map:
/// `gamma_hat = gamma - epsilon L` and `l_hat = (1 + epsilon) L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Regularity {
    pub gamma_hat: f64,
    pub l_hat: f64,
}

impl Regularity {
    /// Per-step contraction factor `sqrt(1 - eta * gamma_hat)`.
    pub fn alpha(&self, eta: f64) -> f64 {
        (1.0 - eta * self.gamma_hat).max(0.0).sqrt()
    }

    /// Sufficient step-size cap `min{ 1/gamma_hat, gamma_hat/l_hat^2 }`.
    pub fn eta_cap(&self) -> f64 {
        (1.0 / self.gamma_hat).min(self.gamma_hat / (self.l_hat * self.l_hat))
    }
}

/// One time slice of the online problem: objective family, constraint sets,
/// distributional map, and the regularity constants computed from the
/// family's matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "SaddleProblemRepr")]
pub struct SaddleProblem {
    objective: QuadraticObjective,
    constraint_x: ConstraintSet,
    constraint_y: ConstraintSet,
    dist_map: DistributionalMap,
    #[serde(skip)]
    gamma: f64,
    #[serde(skip)]
    lipschitz: f64,
    #[serde(skip)]
    jacobian_z: DMatrix<f64>,
    #[serde(skip)]
    noise_jacobian: DMatrix<f64>,
    #[serde(skip)]
    linear_term: DVector<f64>,
    #[serde(skip)]
    coupled_matrix: DMatrix<f64>,
    #[serde(skip)]
    coupled_offset: DVector<f64>,
}

#[derive(Deserialize)]
struct SaddleProblemRepr {
    objective: QuadraticObjective,
    constraint_x: ConstraintSet,
    constraint_y: ConstraintSet,
    dist_map: DistributionalMap,
}

impl TryFrom<SaddleProblemRepr> for SaddleProblem {
    type Error = Error;

    fn try_from(r: SaddleProblemRepr) -> Result<Self> {
        Self::new(r.objective, r.constraint_x, r.constraint_y, r.dist_map)
    }
}

impl SaddleProblem {
    /// Assemble a problem; `gamma` and `L` are computed from the objective's
    /// matrices (extreme eigenvalue / spectral norms), never user-supplied.
    pub fn new(
        objective: QuadraticObjective,
        constraint_x: ConstraintSet,
        constraint_y: ConstraintSet,
        dist_map: DistributionalMap,
    ) -> Result<Self> {
        let (n, m) = objective.dims();
        if constraint_x.dimension() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: constraint_x.dimension(),
            });
        }
        if constraint_y.dimension() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: constraint_y.dimension(),
            });
        }
        if dist_map.decision_dim() != n + m {
            return Err(Error::DimensionMismatch {
                expected: n + m,
                actual: dist_map.decision_dim(),
            });
        }
        if dist_map.noise_dim() != objective.noise_dim() {
            return Err(Error::DimensionMismatch {
                expected: objective.noise_dim(),
                actual: dist_map.noise_dim(),
            });
        }
        let gamma = objective.strong_convexity();
        let lipschitz = objective.smoothness();
        let jacobian_z = objective.jacobian_z();
        let noise_jacobian = objective.noise_jacobian();
        let linear_term = objective.linear_term();
        let coupled_matrix = &jacobian_z + &noise_jacobian * dist_map.shift_matrix();
        let coupled_offset = &linear_term + &noise_jacobian * dist_map.base_mean();
        Ok(Self {
            objective,
            constraint_x,
            constraint_y,
            dist_map,
            gamma,
            lipschitz,
            jacobian_z,
            noise_jacobian,
            linear_term,
            coupled_matrix,
            coupled_offset,
        })
    }

    pub fn n(&self) -> usize {
        self.objective.dims().0
    }

    pub fn m(&self) -> usize {
        self.objective.dims().1
    }

    pub fn objective(&self) -> &QuadraticObjective {
        &self.objective
    }

    pub fn constraint_x(&self) -> &ConstraintSet {
        &self.constraint_x
    }

    pub fn constraint_y(&self) -> &ConstraintSet {
        &self.constraint_y
    }

    pub fn dist_map(&self) -> &DistributionalMap {
        &self.dist_map
    }

    /// Strong convexity/concavity modulus of the objective family.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Joint smoothness constant of `g` in `z` and `w`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Wasserstein-1 Lipschitz constant of the distributional map.
    pub fn epsilon(&self) -> f64 {
        self.dist_map.lipschitz_constant()
    }

    /// `(gamma_hat, l_hat)` of the coupled map; fails with `NotContractive`
    /// when `epsilon L >= gamma` (strict inequality required).
    pub fn regularity(&self) -> Result<Regularity> {
        let epsilon_l = self.epsilon() * self.lipschitz;
        if epsilon_l >= self.gamma {
            return Err(Error::NotContractive {
                epsilon_l,
                gamma: self.gamma,
            });
        }
        Ok(Regularity {
            gamma_hat: self.gamma - epsilon_l,
            l_hat: (1.0 + self.epsilon()) * self.lipschitz,
        })
    }

    /// Block projection onto `Z = X x Y`.
    pub fn project_z(&self, z: &DecisionPoint) -> Result<DecisionPoint> {
        Ok(DecisionPoint::new(
            self.constraint_x.project(&z.x)?,
            self.constraint_y.project(&z.y)?,
        ))
    }

    pub(crate) fn project_stacked_in_place(&self, z: &mut DVector<f64>) {
        let n = self.n();
        let m = self.m();
        let mut x = z.rows_mut(0, n);
        match &self.constraint_x {
            ConstraintSet::Box { lower, upper } => {
                for i in 0..n {
                    x[i] = x[i].clamp(lower[i], upper[i]);
                }
            }
            ConstraintSet::Ball { center, radius } => {
                let mut owned = x.into_owned();
                ConstraintSet::Ball {
                    center: center.clone(),
                    radius: *radius,
                }
                .project_in_place(&mut owned);
                z.rows_mut(0, n).copy_from(&owned);
            }
        }
        let mut y = z.rows_mut(n, m);
        match &self.constraint_y {
            ConstraintSet::Box { lower, upper } => {
                for i in 0..m {
                    y[i] = y[i].clamp(lower[i], upper[i]);
                }
            }
            ConstraintSet::Ball { center, radius } => {
                let mut owned = y.into_owned();
                ConstraintSet::Ball {
                    center: center.clone(),
                    radius: *radius,
                }
                .project_in_place(&mut owned);
                z.rows_mut(n, m).copy_from(&owned);
            }
        }
    }

    pub fn contains(&self, z: &DecisionPoint, tol: f64) -> bool {
        self.constraint_x.contains(&z.x, tol) && self.constraint_y.contains(&z.y, tol)
    }

    /// Interior starting point for oracle iterations.
    pub fn interior_start(&self) -> DecisionPoint {
        DecisionPoint::new(self.constraint_x.midpoint(), self.constraint_y.midpoint())
    }

    /// Objective value `f(x, y, w)`.
    pub fn objective_value(&self, z: &DecisionPoint, w: &DVector<f64>) -> Result<f64> {
        self.objective.value(z, w)
    }

    /// Closed-form stochastic gradient `g(z, w)`.
    pub fn stochastic_gradient(&self, z: &DecisionPoint, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.objective.gradient_map(z, w)
    }

    /// Decoupled gradient `G(z; z') = E_{w ~ D(z')} g(z, w)`. The family is
    /// affine in `w`, so the expectation reduces to the mean shift.
    pub fn decoupled_gradient(
        &self,
        z: &DecisionPoint,
        z_prime: &DecisionPoint,
    ) -> Result<DVector<f64>> {
        let mean = self.dist_map.mean_shift(z_prime)?;
        self.objective.gradient_map(z, &mean)
    }

    /// Coupled map `G(z) = G(z; z)` iterated by the solvers.
    pub fn coupled_gradient(&self, z: &DecisionPoint) -> Result<DVector<f64>> {
        let (n, m) = self.objective.dims();
        if z.dims() != (n, m) {
            return Err(Error::DimensionMismatch {
                expected: n + m,
                actual: z.len(),
            });
        }
        Ok(&self.coupled_matrix * z.stacked() + &self.coupled_offset)
    }

    pub(crate) fn coupled_gradient_stacked_into(&self, z: &DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(&self.coupled_offset);
        out.gemv(1.0, &self.coupled_matrix, z, 1.0);
    }

    pub(crate) fn gradient_with_mean_into(
        &self,
        z: &DVector<f64>,
        w: &DVector<f64>,
        out: &mut DVector<f64>,
    ) {
        out.copy_from(&self.linear_term);
        out.gemv(1.0, &self.jacobian_z, z, 1.0);
        out.gemv(1.0, &self.noise_jacobian, w, 1.0);
    }
}

impl GradientOracle for SaddleProblem {
    fn dims(&self) -> (usize, usize) {
        self.objective.dims()
    }

    fn noise_dim(&self) -> usize {
        self.objective.noise_dim()
    }

    fn stochastic_gradient(&self, z: &DecisionPoint, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.objective.gradient_map(z, w)
    }
}

/// Time-indexed sequence of saddle problems sharing dimensions.
#[derive(Clone, Debug)]
pub struct ProblemStream {
    problems: Vec<SaddleProblem>,
}

impl ProblemStream {
    pub fn new(problems: Vec<SaddleProblem>) -> Result<Self> {
        let first = problems
            .first()
            .ok_or_else(|| Error::invalid("stream must contain at least one problem"))?;
        let dims = (first.n(), first.m());
        if problems.iter().any(|p| (p.n(), p.m()) != dims) {
            return Err(Error::invalid("all stream problems must share (n, m)"));
        }
        Ok(Self { problems })
    }

    /// A stream repeating the same problem for `horizon` steps.
    pub fn constant(problem: SaddleProblem, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        Ok(Self {
            problems: vec![problem; horizon],
        })
    }

    pub fn from_fn(
        horizon: usize,
        mut f: impl FnMut(usize) -> Result<SaddleProblem>,
    ) -> Result<Self> {
        let problems = (0..horizon).map(&mut f).collect::<Result<Vec<_>>>()?;
        Self::new(problems)
    }

    pub fn horizon(&self) -> usize {
        self.problems.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.problems[0].n(), self.problems[0].m())
    }

    pub fn problem(&self, t: usize) -> &SaddleProblem {
        &self.problems[t]
    }

    pub fn problems(&self) -> &[SaddleProblem] {
        &self.problems
    }

    /// Keep only the first `horizon` steps (at least one).
    pub fn truncated(mut self, horizon: usize) -> Self {
        self.problems.truncate(horizon.max(1));
        self
    }
}
