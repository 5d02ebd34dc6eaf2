//! Contextual bandits with knapsacks (CBwK).
//!
//! The crate provides the projected-gradient dual strategy with fixed and
//! adaptive step sizes, the LP-based primal strategy for finite context sets,
//! optimistic reward/cost estimators, dual-minimization benchmark oracles,
//! and the fairness-constrained court-appearance simulator, together with a
//! seeded experiment harness.

pub mod dual_strategy;
pub mod error;
pub mod estimators;
pub mod fairness;
pub mod harness;
pub mod finite;
pub mod lp;
pub mod oracles;
pub mod primal;
pub mod problem;
pub mod selftest;
pub mod strategy;

pub use error::{CbwkError, Result};
pub use problem::{
    clip, cost_excess_norm, regret, ActionId, BudgetVector, ContextVector, DualVector,
    Environment, PolicyDistribution, RoundRecord, Trajectory,
};
