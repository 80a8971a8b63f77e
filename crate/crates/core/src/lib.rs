//! Policy evaluation and policy learning that stay reliable when the
//! conditional reward law drifts inside a KL ball.
//!
//! The crate is organised bottom-up:
//!
//! * [`dual`]: the KL dual loss, its gradient, the scalar dual solver and the
//!   exponential-tilting primal oracles. Generic over the scalar type.
//! * [`nuisance`]: propensity models, sieve bases, the context-dependent dual
//!   field and conditional-mean regressions.
//! * [`estimator`]: the cross-fitted doubly-robust robust-value estimator.
//! * [`learner`]: per-action nuisances, the score matrix and exact policy-tree
//!   search.
//! * [`baseline`]: the joint-shift (self-normalised IPW) comparator.
//! * [`bench`]: simulation designs, evaluation metrics and adversarial fixtures.

pub mod baseline;
pub mod bench;
pub mod data;
pub mod dual;
pub mod error;
pub mod estimator;
pub mod learner;
pub mod nuisance;
pub mod optim;
pub mod policy;
pub mod rng;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use data::{Dataset, PotentialOutcomeTable};
pub use estimator::{EstimatorConfig, RobustValueReport};
pub use learner::{LearnerConfig, PolicyTree, ScoreMatrix};
pub use policy::Policy;

/// Scalar used by the statistical pipeline (nuisances, estimators, learners).
pub type Real = f64;

/// Dual parameters in double precision.
pub type DualParams64 = dual::DualParams<f64>;
/// Dual parameters in single precision.
pub type DualParams32 = dual::DualParams<f32>;
/// KL radius in double precision.
pub type Radius = dual::RadiusDelta<f64>;
/// Finite-support distribution in double precision.
pub type DiscreteDist64 = dual::DiscreteDist<f64>;
/// Scalar-dual solver settings in double precision.
pub type SolverConfig64 = dual::SolverConfig<f64>;
