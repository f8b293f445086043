//! Tabular risk-sensitive reinforcement learning.
//!
//! Objectives are quantile-weighted integrals of the episode return (CVaR and
//! its generalizations). The crate provides exact evaluation of such
//! objectives, planning on the cumulative-reward-augmented model, an
//! optimistic model-based learner with regret tracking, and exhaustive
//! oracles used to cross-check all of the above on small models.

// Range checks are written `!(x > 0.0)` so that NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod augment;
pub mod envs;
pub mod error;
pub mod learner;
pub mod mdp;
pub mod optimist;
pub mod planner;
pub mod riskdist;

pub use error::{Error, Result};
