use rand::RngCore;

use crate::estimators::Estimator;
use crate::problem::{ActionId, ContextVector, DualVector};

/// A policy driving the bandit loop after warm-up.
///
/// Each round the harness calls `choose` with the estimator as it stood after
/// the previous round, then `observe` with the realized outcome, and only
/// then feeds the observation to the estimator.
pub trait Strategy: Send {
    fn choose(
        &mut self,
        est: &dyn Estimator,
        x: &ContextVector,
        rng: &mut dyn RngCore,
    ) -> ActionId;

    fn observe(&mut self, est: &dyn Estimator, x: &ContextVector, a: ActionId, r: f64, c: &[f64]);

    /// Current dual variables, for logging. Strategies without duals report zeros.
    fn lambda(&self) -> DualVector;

    /// Current regime index (0 for strategies without regimes).
    fn regime(&self) -> usize {
        0
    }

    /// Number of rounds that fell back to a default policy.
    fn fallback_count(&self) -> usize {
        0
    }
}

/// Optimistic reward and cost estimates of every action at `x`.
pub(crate) fn optimistic_scores(
    est: &dyn Estimator,
    x: &ContextVector,
    num_actions: usize,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    (0..num_actions)
        .map(|a| (est.reward_ucb(x, ActionId(a)), est.cost_lcb(x, ActionId(a))))
        .unzip()
}
