//! Online primal-dual tracking of equilibrium points for time-varying
//! stochastic saddle-point problems whose data distribution depends on the
//! decision variables.
//!
//! The crate provides:
//!
//! - a quadratic saddle objective family with closed-form stochastic and
//!   decoupled gradient maps ([`problem`]),
//! - location-scale distributional maps `z -> law(w0 + M z)` with exact
//!   Wasserstein-1 Lipschitz constants ([`distribution`]),
//! - an equilibrium oracle plus conceptual and stochastic online
//!   primal-dual trackers ([`solver`]),
//! - a sub-Weibull moment/tail toolkit and tracking-error bound
//!   calculators ([`subweibull`]),
//! - a two-provider charging-market stream builder driven by demand time
//!   series ([`market`]),
//! - seeded Monte Carlo replication helpers ([`montecarlo`]).

pub mod distribution;
pub mod error;
pub mod market;
pub mod montecarlo;
pub mod problem;
pub mod rng;
pub mod scenario;
mod serde_helpers;
pub mod solver;
pub mod subweibull;

pub use error::{Error, Result};
pub use problem::{
    ConstraintSet, DecisionPoint, GradientOracle, ProblemStream, QuadraticObjective, Regularity,
    SaddleProblem,
};
pub use solver::{
    equilibrium_oracle, online_primal_dual, online_stochastic_primal_dual, retraining_step,
    SolverConfig, Trajectory,
};
pub use subweibull::{BoundInputs, SubWeibullParams};
