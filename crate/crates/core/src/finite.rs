//! Synthetic environments over a finite context set.
//!
//! Rewards are Bernoulli with the tabulated mean. A cost component with mean
//! `c ≥ 0` is Bernoulli on `{0, 1}` and one with `c < 0` is minus a Bernoulli,
//! so zero-mean components are exactly zero.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::problem::{ActionId, BudgetVector, ContextVector, Environment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteInstance {
    /// Context probabilities.
    pub weights: Vec<f64>,
    /// `rewards[x][a]` in `[0, 1]`.
    pub rewards: Vec<Vec<f64>>,
    /// `costs[x][a][i]` in `[-1, 1]`.
    pub costs: Vec<Vec<Vec<f64>>>,
    pub budget: Vec<f64>,
    #[serde(default)]
    pub null_action: Option<usize>,
}

impl FiniteInstance {
    pub fn validate(&self) -> Result<()> {
        let nx = self.weights.len();
        if nx == 0 {
            return Err(invalid("finite instance needs at least one context"));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid("context weights must be a probability vector"));
        }
        if self.rewards.len() != nx || self.costs.len() != nx {
            return Err(invalid("reward/cost tables must have one row per context"));
        }
        let na = self.rewards[0].len();
        let d = self.budget.len();
        if na == 0 || d == 0 {
            return Err(invalid("empty action set or cost dimension"));
        }
        BudgetVector::new(self.budget.clone())?;
        for (rx, cx) in self.rewards.iter().zip(&self.costs) {
            if rx.len() != na || cx.len() != na {
                return Err(invalid("ragged reward/cost tables"));
            }
            if rx.iter().any(|r| !(0.0..=1.0).contains(r)) {
                return Err(invalid("rewards must lie in [0, 1]"));
            }
            for c in cx {
                if c.len() != d {
                    return Err(invalid("cost vector length differs from budget"));
                }
                if c.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                    return Err(invalid("costs must lie in [-1, 1]"));
                }
            }
        }
        if let Some(a) = self.null_action {
            if a >= na {
                return Err(invalid("null action out of range"));
            }
            if self.costs.iter().any(|cx| cx[a].iter().any(|v| *v != 0.0)) {
                return Err(invalid("declared null action has nonzero cost"));
            }
        }
        Ok(())
    }

    pub fn num_contexts(&self) -> usize {
        self.weights.len()
    }

    pub fn num_actions(&self) -> usize {
        self.rewards[0].len()
    }

    pub fn cost_dim(&self) -> usize {
        self.budget.len()
    }

    pub fn context(&self, i: usize) -> ContextVector {
        ContextVector::new(vec![i as f64])
            .expect("finite index")
            .with_support_index(i)
    }

    /// Random instance with rewards and costs uniform on `[0, 1]`. With
    /// `null_action`, action 0 has zero cost everywhere.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        nx: usize,
        na: usize,
        d: usize,
        null_action: bool,
    ) -> Self {
        let raw: Vec<f64> = (0..nx).map(|_| rng.random::<f64>() + 0.1).collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.iter().map(|w| w / total).collect();
        let rewards = (0..nx)
            .map(|_| (0..na).map(|_| rng.random::<f64>()).collect())
            .collect();
        let costs = (0..nx)
            .map(|_| {
                (0..na)
                    .map(|a| {
                        (0..d)
                            .map(|_| {
                                let c = rng.random::<f64>();
                                if null_action && a == 0 {
                                    0.0
                                } else {
                                    c
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let budget = (0..d).map(|_| 0.1 + 0.6 * rng.random::<f64>()).collect();
        Self {
            weights,
            rewards,
            costs,
            budget,
            null_action: null_action.then_some(0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FiniteEnvironment {
    instance: FiniteInstance,
    cdf: Vec<f64>,
}

impl FiniteEnvironment {
    pub fn new(instance: FiniteInstance) -> Result<Self> {
        instance.validate()?;
        let mut acc = 0.0;
        let cdf = instance
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self { instance, cdf })
    }

    pub fn instance(&self) -> &FiniteInstance {
        &self.instance
    }

    pub fn budget(&self) -> BudgetVector {
        BudgetVector::new(self.instance.budget.clone()).expect("validated")
    }

    fn index(x: &ContextVector) -> usize {
        x.support_index
            .expect("finite environment contexts carry their support index")
    }
}

impl Environment for FiniteEnvironment {
    fn num_actions(&self) -> usize {
        self.instance.num_actions()
    }

    fn cost_dim(&self) -> usize {
        self.instance.cost_dim()
    }

    fn sample_context(&self, rng: &mut dyn RngCore) -> ContextVector {
        let u: f64 = rng.random();
        let i = self
            .cdf
            .iter()
            .position(|c| u < *c)
            .unwrap_or(self.cdf.len() - 1);
        self.instance.context(i)
    }

    fn expected_reward(&self, x: &ContextVector, a: ActionId) -> f64 {
        self.instance.rewards[Self::index(x)][a.0]
    }

    fn expected_cost(&self, x: &ContextVector, a: ActionId) -> Vec<f64> {
        self.instance.costs[Self::index(x)][a.0].clone()
    }

    fn sample_reward(&self, x: &ContextVector, a: ActionId, rng: &mut dyn RngCore) -> f64 {
        let p = self.expected_reward(x, a);
        if rng.random::<f64>() < p {
            1.0
        } else {
            0.0
        }
    }

    fn sample_cost(&self, x: &ContextVector, a: ActionId, rng: &mut dyn RngCore) -> Vec<f64> {
        self.instance.costs[Self::index(x)][a.0]
            .iter()
            .map(|&c| {
                let u: f64 = rng.random();
                if u < c.abs() {
                    c.signum()
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn finite_support(&self) -> Option<(Vec<ContextVector>, Vec<f64>)> {
        let xs = (0..self.instance.num_contexts())
            .map(|i| self.instance.context(i))
            .collect();
        Some((xs, self.instance.weights.clone()))
    }

    fn null_action(&self) -> Option<ActionId> {
        self.instance.null_action.map(ActionId)
    }
}
