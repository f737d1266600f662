//! Monotone cumulative-incidence modelling for sequential first-hitting-time
//! events.
//!
//! - [`model`]: a partially monotone network whose predicted CIF is
//!   non-decreasing in time and non-increasing in grade by construction.
//! - [`training`]: the per-observation likelihood loss, Adam, early stopping.
//! - [`simulator`]: Markov-chain ground truth with intermittent, censored
//!   observation and exact CIFs.
//! - [`metrics`]: implied-truth IPCW Brier scores and related diagnostics.
//!
//! Numeric code is generic over the scalar type; the aliases below fix the
//! common choices.

pub mod audit;
pub mod autodiff;
pub mod data;
pub mod io;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod seed;
pub mod simulator;
pub mod training;

pub use data::{Dataset, Observation, Subject, SubjectId, Trajectory};
pub use scalar::Scalar;

/// Exact rational used for hand-checkable fixtures.
pub type Rational = num_rational::Ratio<i128>;

pub type Network = model::Network<f64>;
pub type Tape = autodiff::Tape<f64>;
pub type CifSurface = model::CifSurface<f64>;
