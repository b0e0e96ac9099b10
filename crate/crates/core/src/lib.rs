//! Solvers for hidden-action principal-multi-agent contract design with
//! agent-individual outcomes.
//!
//! The crate computes optimal or provably-approximate contracts in the
//! non-Bayesian setting, and menus of randomized contracts in the Bayesian
//! setting:
//!
//! - [`model`] defines instances, contracts, and expected-reward evaluation;
//! - [`rewards`] holds the succinct reward families and the structural
//!   checks (monotonicity, diminishing/increasing returns, stochastic
//!   dominance) the solvers rely on;
//! - [`lp`] is the dense simplex and ellipsoid toolkit;
//! - [`payments`] computes incentive-compatible minimum expected payments;
//! - [`matroid`] carries the reduction to weighted profile selection with
//!   one slot per agent, and the brute-force reference solver;
//! - [`supermod`] is the exact polynomial solver for increasing-return
//!   rewards under stochastic dominance, built on submodular minimization;
//! - [`submod`] is the `(1 - 1/e)`-approximation for diminishing-return
//!   rewards, built on a distorted continuous greedy;
//! - [`bayes`] is the Bayesian pipeline: direct LP, dual separation,
//!   binary-searched ellipsoid, regularization, and menu recovery;
//! - [`gen`] produces seeded random instances and adversarial gadgets.

// Dense numeric kernels walk several buffers in lockstep; indexed loops are
// the clearer form there.
#![allow(clippy::needless_range_loop)]

pub mod bayes;
pub mod fixtures;
pub mod gen;
pub mod lp;
pub mod matroid;
pub mod model;
pub mod payments;
pub mod rewards;
pub mod rng;
pub mod submod;
pub mod supermod;

pub use model::{Contract, Instance, RewardMode};
pub use rewards::{RewardFamily, RewardSpec, StructuralTag};
