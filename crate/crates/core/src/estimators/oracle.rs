use std::sync::Arc;

use super::Estimator;
use crate::error::Result;
use crate::problem::{ActionId, ContextVector, Environment};

/// Test double with exact knowledge of `r` and `c`: every width is zero.
pub struct OracleEstimator {
    env: Arc<dyn Environment>,
}

impl OracleEstimator {
    pub fn new(env: Arc<dyn Environment>) -> Self {
        Self { env }
    }
}

impl Estimator for OracleEstimator {
    fn cost_dim(&self) -> usize {
        self.env.cost_dim()
    }

    fn rounds(&self) -> usize {
        0
    }

    fn reward_estimate(&self, x: &ContextVector, a: ActionId) -> f64 {
        self.env.expected_reward(x, a)
    }

    fn cost_estimate(&self, x: &ContextVector, a: ActionId) -> Vec<f64> {
        self.env.expected_cost(x, a)
    }

    fn epsilon(&self, _x: &ContextVector, _a: ActionId) -> f64 {
        0.0
    }

    fn update(&mut self, _x: &ContextVector, _a: ActionId, _r: f64, _c: &[f64]) -> Result<()> {
        Ok(())
    }

    fn beta(&self) -> f64 {
        0.0
    }
}
