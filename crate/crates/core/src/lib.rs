//! Distributed protection of a control-center function: randomized leader
//! election over committed contributions, software attestation with
//! broadcast reports, report-driven trust with majority eviction, and a
//! PMU Kalman-filter state estimator as the protected workload.
//!
//! The trust and dynamics code is generic over [`Scalar`]; the aliases below
//! fix the usual instantiations.

pub mod agent;
pub mod attestation;
pub mod commitment;
pub mod dynamics;
pub mod election;
pub mod estimation;
pub mod scalar;
pub mod sim;
pub mod trust;

pub use agent::AgentIndex;
pub use scalar::Scalar;

/// Exact rational scalar used for fixed-point and oracle checks.
pub type Exact = num_rational::Rational64;

pub type TrustMatrix64 = trust::TrustMatrix<f64>;
pub type TrustState64 = dynamics::TrustState<f64>;
pub type ExactTrustState = dynamics::TrustState<Exact>;
pub type Trajectory64 = dynamics::Trajectory<f64>;
