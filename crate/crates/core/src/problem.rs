//! Problem-setting types shared by every strategy.
//!
//! A run draws a context, picks an action, then observes a reward in `[0, 1]`
//! and a cost vector in `[-1, 1]^d`. The learner maximizes the cumulative
//! reward while keeping the cumulative cost below `T * B`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A sampled context. `group` is the sensitive attribute read from the context
/// (awareness setting); `support_index` identifies the context inside a finite
/// support when the environment has one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextVector {
    pub coords: Vec<f64>,
    pub group: Option<usize>,
    pub support_index: Option<usize>,
}

impl ContextVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("context coordinates must be finite"));
        }
        Ok(Self {
            coords,
            group: None,
            support_index: None,
        })
    }

    pub fn with_group(mut self, group: usize) -> Self {
        self.group = Some(group);
        self
    }

    pub fn with_support_index(mut self, index: usize) -> Self {
        self.support_index = Some(index);
        self
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn index(self) -> usize {
        self.0
    }

    pub fn checked(index: usize, num_actions: usize) -> Result<Self> {
        if index >= num_actions {
            return Err(invalid(format!(
                "action index {index} out of range for {num_actions} actions"
            )));
        }
        Ok(Self(index))
    }
}

/// Per-round average cost constraints `B`, each component in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetVector(Vec<f64>);

impl BudgetVector {
    pub fn new(b: Vec<f64>) -> Result<Self> {
        if b.is_empty() {
            return Err(invalid("budget vector must have at least one component"));
        }
        if let Some(v) = b.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("budget component {v} outside [0, 1]")));
        }
        Ok(Self(b))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `B - b * 1`: margin applied to every component. The result may leave
    /// `[0, 1]`, so it is returned as a plain target vector.
    pub fn with_uniform_margin(&self, b: f64) -> Vec<f64> {
        self.0.iter().map(|v| v - b).collect()
    }

    /// `B - (b, .., b, 0, .., 0)`: margin applied to the first `k` components only.
    pub fn with_leading_margin(&self, b: f64, k: usize) -> Vec<f64> {
        self.0
            .iter()
            .enumerate()
            .map(|(i, v)| if i < k { v - b } else { *v })
            .collect()
    }
}

/// Nonnegative Lagrange multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVector(Vec<f64>);

impl DualVector {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("dual variables must be finite and nonnegative"));
        }
        Ok(Self(lambda))
    }

    /// Componentwise positive part of an arbitrary vector.
    pub fn project(raw: Vec<f64>) -> Self {
        Self(raw.into_iter().map(|v| v.max(0.0)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.0)
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

/// A probability distribution over actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDistribution(Vec<f64>);

impl PolicyDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("policy over an empty action set"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(invalid("policy probabilities must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(invalid(format!("policy probabilities sum to {total}")));
        }
        Ok(Self(probs))
    }

    /// Clamps tiny negative round-off and renormalizes.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let clamped: Vec<f64> = weights.iter().map(|w| w.max(0.0)).collect();
        let total: f64 = clamped.iter().sum();
        if !(total > 0.0) {
            return Err(invalid("policy weights have no positive mass"));
        }
        Self::new(clamped.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(num_actions: usize) -> Self {
        Self(vec![1.0 / num_actions as f64; num_actions])
    }

    pub fn point_mass(action: ActionId, num_actions: usize) -> Self {
        let mut p = vec![0.0; num_actions];
        p[action.0] = 1.0;
        Self(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Inverse-CDF sampling with one uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionId {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.0.iter().enumerate() {
            acc += p;
            if u < acc {
                return ActionId(i);
            }
        }
        // round-off: fall back to the last action with positive mass
        let last = self.0.iter().rposition(|p| *p > 0.0).unwrap_or(0);
        ActionId(last)
    }
}

/// Stochastic environment of the bandit loop.
///
/// Implementations must be usable from several runs at once; all randomness
/// comes from the caller's generator.
pub trait Environment: Send + Sync {
    fn num_actions(&self) -> usize;

    fn cost_dim(&self) -> usize;

    fn sample_context(&self, rng: &mut dyn rand::RngCore) -> ContextVector;

    fn expected_reward(&self, x: &ContextVector, a: ActionId) -> f64;

    fn expected_cost(&self, x: &ContextVector, a: ActionId) -> Vec<f64>;

    fn sample_reward(&self, x: &ContextVector, a: ActionId, rng: &mut dyn rand::RngCore) -> f64;

    fn sample_cost(&self, x: &ContextVector, a: ActionId, rng: &mut dyn rand::RngCore)
        -> Vec<f64>;

    /// Finite support and its probabilities, when the context set is finite.
    fn finite_support(&self) -> Option<(Vec<ContextVector>, Vec<f64>)> {
        None
    }

    /// An action whose expected cost is zero on every component, if any.
    fn null_action(&self) -> Option<ActionId> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub x: ContextVector,
    pub a: ActionId,
    pub r: f64,
    pub c: Vec<f64>,
    pub lambda_before: DualVector,
    pub regime: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    records: Vec<RoundRecord>,
    cum_reward: f64,
    cum_cost: Vec<f64>,
}

impl Trajectory {
    pub fn new(d: usize) -> Self {
        Self {
            records: Vec::new(),
            cum_reward: 0.0,
            cum_cost: vec![0.0; d],
        }
    }

    pub fn with_capacity(d: usize, horizon: usize) -> Self {
        Self {
            records: Vec::with_capacity(horizon),
            cum_reward: 0.0,
            cum_cost: vec![0.0; d],
        }
    }

    pub fn push(&mut self, record: RoundRecord) {
        self.cum_reward += record.r;
        for (acc, c) in self.cum_cost.iter_mut().zip(&record.c) {
            *acc += c;
        }
        self.records.push(record);
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn cum_reward(&self) -> f64 {
        self.cum_reward
    }

    pub fn cum_cost(&self) -> &[f64] {
        &self.cum_cost
    }

    /// Sum of the costs of the first `upto` rounds.
    pub fn cost_sum_upto(&self, upto: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.cum_cost.len()];
        for rec in &self.records[..upto] {
            for (s, c) in acc.iter_mut().zip(&rec.c) {
                *s += c;
            }
        }
        acc
    }
}

pub fn clip(x: f64, lo: f64, hi: f64) -> Result<f64> {
    if lo > hi {
        return Err(invalid(format!("clip bounds reversed: {lo} > {hi}")));
    }
    Ok(x.max(lo).min(hi))
}

/// `T * opt_per_round - sum of rewards`.
pub fn regret(traj: &Trajectory, opt_per_round: f64) -> Result<f64> {
    if traj.is_empty() {
        return Err(invalid("regret of an empty trajectory"));
    }
    Ok(traj.len() as f64 * opt_per_round - traj.cum_reward())
}

/// `‖(Σ_{τ ≤ upto} c_τ − upto · target)_+‖`.
pub fn cost_excess_norm(traj: &Trajectory, target: &[f64], upto: usize) -> Result<f64> {
    if upto > traj.len() {
        return Err(invalid(format!(
            "upto = {upto} beyond trajectory length {}",
            traj.len()
        )));
    }
    if target.len() != traj.cum_cost().len() {
        return Err(crate::error::CbwkError::DimensionMismatch {
            expected: traj.cum_cost().len(),
            actual: target.len(),
        });
    }
    let sum = traj.cost_sum_upto(upto);
    Ok(positive_part_norm(&sum, target, upto as f64))
}

/// `‖(sum − n · target)_+‖` for an already accumulated sum.
pub fn positive_part_norm(sum: &[f64], target: &[f64], n: f64) -> f64 {
    sum.iter()
        .zip(target)
        .map(|(s, b)| (s - n * b).max(0.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: usize, r: f64, c: Vec<f64>) -> RoundRecord {
        let d = c.len();
        RoundRecord {
            t,
            x: ContextVector::new(vec![0.0]).unwrap(),
            a: ActionId(0),
            r,
            c,
            lambda_before: DualVector::zeros(d),
            regime: 0,
        }
    }

    #[test]
    fn clip_cases() {
        assert_eq!(clip(1.2, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(clip(-1.5, -1.0, 1.0).unwrap(), -1.0);
        assert_eq!(clip(0.3, 0.0, 1.0).unwrap(), 0.3);
        assert!(clip(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn regret_direct_formula() {
        let mut traj = Trajectory::new(1);
        for t in 1..=10 {
            traj.push(record(t, 0.5, vec![0.0]));
        }
        assert_eq!(regret(&traj, 0.5).unwrap(), 0.0);

        let mut zero = Trajectory::new(1);
        for t in 1..=10 {
            zero.push(record(t, 0.0, vec![0.0]));
        }
        assert_eq!(regret(&zero, 0.5).unwrap(), 5.0);
        assert!(regret(&Trajectory::new(1), 0.5).is_err());
    }

    #[test]
    fn cost_excess_cases() {
        let mut traj = Trajectory::new(1);
        for t in 1..=5 {
            traj.push(record(t, 0.0, vec![0.1]));
        }
        assert!(cost_excess_norm(&traj, &[0.1], 5).unwrap().abs() < 1e-12);

        let mut one = Trajectory::new(1);
        one.push(record(1, 0.0, vec![0.4]));
        assert!((cost_excess_norm(&one, &[0.1], 1).unwrap() - 0.3).abs() < 1e-12);

        let mut neg = Trajectory::new(2);
        neg.push(record(1, 0.0, vec![0.0, -0.2]));
        assert_eq!(cost_excess_norm(&neg, &[0.1, 0.1], 1).unwrap(), 0.0);
        assert!(cost_excess_norm(&neg, &[0.1, 0.1], 2).is_err());
    }

    #[test]
    fn trajectory_sums_match_fold() {
        let mut traj = Trajectory::new(2);
        for t in 1..=50 {
            let v = (t as f64 * 0.37).sin();
            traj.push(record(t, v.abs(), vec![v, -v / 2.0]));
        }
        let r: f64 = traj.records().iter().map(|r| r.r).sum();
        assert_eq!(r, traj.cum_reward());
        assert_eq!(traj.cost_sum_upto(traj.len()), traj.cum_cost());
    }

    #[test]
    fn budget_and_policy_validation() {
        assert!(BudgetVector::new(vec![]).is_err());
        assert!(BudgetVector::new(vec![1.2]).is_err());
        let b = BudgetVector::new(vec![0.05, 0.2, 0.01]).unwrap();
        assert_eq!(b.with_leading_margin(0.005, 2), vec![0.05 - 0.005, 0.2 - 0.005, 0.01]);
        assert!(PolicyDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(PolicyDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(DualVector::new(vec![-0.1]).is_err());
        assert_eq!(DualVector::project(vec![-1.0, 2.0]).as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn context_rejects_non_finite() {
        assert!(ContextVector::new(vec![f64::NAN]).is_err());
        assert!(ActionId::checked(3, 3).is_err());
    }
}
