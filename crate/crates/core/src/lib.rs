//! Regret-optimal best-arm identification.
//!
//! Bandit policies that explore with upper confidence bounds and then commit
//! irrevocably to the arm with the largest lower confidence bound, together
//! with the classic regret-minimising baselines, closed-form evaluators for
//! the associated regret / commitment-time / concentration bounds, and a
//! deterministic parallel Monte Carlo harness.
//!
//! Module map:
//!
//! - [`model`]: reward families, bandit instances, KL divergence, replayable RNG streams.
//! - [`confidence`]: exploration rate, Hoeffding bonus, KL confidence bounds, `KL_min`.
//! - [`policies`]: EOCP, EOCP-UG, KL-EOCP and the UCB / KL-UCB / Thompson / uniform-ETC baselines.
//! - [`bounds`]: finite-time regret, commitment-time and concentration-lemma bound evaluators.
//! - [`sim`]: trajectories, batches, aggregation and Monte Carlo concentration checks.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod confidence;
pub mod error;
pub mod model;
pub mod policies;
pub mod sim;

pub use error::{Error, Result};
pub use model::{BanditInstance, RewardFamily, RngStream};
pub use policies::{Algorithm, Policy, PolicySpec};
