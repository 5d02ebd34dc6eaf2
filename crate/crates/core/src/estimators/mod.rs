//! Sequential estimation of the expected reward and cost functions with
//! confidence widths `ε_t(x, a)`, and the clipped optimistic predictions built
//! from them:
//!
//! ```text
//!   r_ucb(x, a) = clip[r̂_t(x, a) + ε_t(x, a)]_0^1
//!   c_lcb(x, a) = clip[ĉ_t(x, a) − ε_t(x, a)·1]_{−1}^1
//! ```
//!
//! Before any data is seen the estimates are `r̂₀ = 1/2`, `ĉ₀ = 0` with width
//! `ε₀ = 1`, so that every action starts maximally optimistic.

mod features;
mod linear;
mod logistic;
mod oracle;

pub use features::{FeatureMap, PerActionLinearFeatures, TabularFeatures};
pub use linear::{LinearUcbConfig, LinearUcbEstimator};
pub use logistic::{
    fit_logistic_mle, sigmoid, CostFunction, EnvironmentCosts, LogisticFit, LogisticUcbConfig,
    LogisticUcbEstimator, FLOOR_RIDGE,
};
pub use oracle::OracleEstimator;

use crate::error::Result;
use crate::problem::{ActionId, ContextVector};

/// Width used before any observation.
pub const INITIAL_WIDTH: f64 = 1.0;
/// Widths are error bounds on quantities of range at most one.
pub const MAX_WIDTH: f64 = 1.0;

pub trait Estimator: Send {
    fn cost_dim(&self) -> usize;

    /// Number of observations incorporated so far.
    fn rounds(&self) -> usize;

    /// Point estimate `r̂_t(x, a)` in `[0, 1]`.
    fn reward_estimate(&self, x: &ContextVector, a: ActionId) -> f64;

    /// Point estimate `ĉ_t(x, a)` in `[-1, 1]^d`.
    fn cost_estimate(&self, x: &ContextVector, a: ActionId) -> Vec<f64>;

    /// Confidence width `ε_t(x, a)` at the current round.
    fn epsilon(&self, x: &ContextVector, a: ActionId) -> f64;

    fn update(&mut self, x: &ContextVector, a: ActionId, r: f64, c: &[f64]) -> Result<()>;

    /// Running `β = Σ_τ ε_{τ−1}(x_τ, a_τ)` over the observations fed to `update`.
    fn beta(&self) -> f64;

    fn reward_ucb(&self, x: &ContextVector, a: ActionId) -> f64 {
        (self.reward_estimate(x, a) + self.epsilon(x, a)).clamp(0.0, 1.0)
    }

    fn cost_lcb(&self, x: &ContextVector, a: ActionId) -> Vec<f64> {
        let eps = self.epsilon(x, a);
        self.cost_estimate(x, a)
            .into_iter()
            .map(|c| (c - eps).clamp(-1.0, 1.0))
            .collect()
    }
}

/// Running sum of the widths of the played pairs; nondecreasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BetaAccumulator {
    sum: f64,
}

impl BetaAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, eps: f64) {
        debug_assert!(eps >= 0.0);
        self.sum += eps.max(0.0);
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

pub(crate) fn check_observation(r: f64, c: &[f64], d: usize) -> Result<()> {
    use crate::error::{invalid, CbwkError};
    if c.len() != d {
        return Err(CbwkError::DimensionMismatch {
            expected: d,
            actual: c.len(),
        });
    }
    if !r.is_finite() || c.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite observation"));
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(invalid(format!("reward {r} outside [0, 1]")));
    }
    if c.iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(invalid("cost component outside [-1, 1]"));
    }
    Ok(())
}
