//! Benchmark oracles: the dual objective
//!
//! ```text
//!   G(λ) = E_{X∼ν̂}[ max_a { r(X, a) − ⟨c(X, a) − B, λ⟩ } ]
//! ```
//!
//! over a finite weighted sample, its minimization by projected subgradient
//! descent, the exact linear program for finite instances, and the bounds on
//! the norm of the optimal dual variables.

use std::collections::HashMap;

use log::warn;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual_strategy::select_action;
use crate::error::{invalid, CbwkError, Result};
use crate::estimators::Estimator;
use crate::finite::FiniteInstance;
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::primal::solve_constrained_policy;
use crate::problem::{norm2, ActionId, ContextVector, DualVector, Environment, PolicyDistribution};
use crate::strategy::{optimistic_scores, Strategy};

/// Weighted finite sample of contexts with the true `r` and `c` tabulated.
#[derive(Debug, Clone)]
pub struct DualSample {
    weights: Vec<f64>,
    num_actions: usize,
    /// `rewards[x * |A| + a]`
    rewards: Vec<f64>,
    /// index into `unique_costs` for every `(x, a)`
    cost_index: Vec<usize>,
    unique_costs: Vec<Vec<f64>>,
    budget: Vec<f64>,
}

impl DualSample {
    /// `rewards[x][a]`, `costs[x][a][i]`.
    pub fn new(
        weights: Vec<f64>,
        rewards: &[Vec<f64>],
        costs: &[Vec<Vec<f64>>],
        budget: Vec<f64>,
    ) -> Result<Self> {
        let nx = weights.len();
        if nx == 0 || rewards.len() != nx || costs.len() != nx {
            return Err(invalid("dual sample tables must have one row per context"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid("dual sample weights must sum to 1"));
        }
        let na = rewards[0].len();
        let d = budget.len();
        if na == 0 || d == 0 {
            return Err(invalid("empty action set or cost dimension"));
        }
        let mut flat_r = Vec::with_capacity(nx * na);
        let mut cost_index = Vec::with_capacity(nx * na);
        let mut unique_costs: Vec<Vec<f64>> = Vec::new();
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        for (rx, cx) in rewards.iter().zip(costs) {
            if rx.len() != na || cx.len() != na {
                return Err(invalid("ragged reward/cost tables"));
            }
            for (r, c) in rx.iter().zip(cx) {
                if c.len() != d {
                    return Err(CbwkError::DimensionMismatch {
                        expected: d,
                        actual: c.len(),
                    });
                }
                flat_r.push(*r);
                let key: Vec<u64> = c.iter().map(|v| v.to_bits()).collect();
                let idx = *seen.entry(key).or_insert_with(|| {
                    unique_costs.push(c.clone());
                    unique_costs.len() - 1
                });
                cost_index.push(idx);
            }
        }
        Ok(Self {
            weights,
            num_actions: na,
            rewards: flat_r,
            cost_index,
            unique_costs,
            budget,
        })
    }

    pub fn from_instance(inst: &FiniteInstance) -> Result<Self> {
        Self::new(inst.weights.clone(), &inst.rewards, &inst.costs, inst.budget.clone())
    }

    /// Uniform weights over the given contexts, with the environment's
    /// expected reward and cost.
    pub fn from_contexts(env: &dyn Environment, contexts: &[ContextVector], budget: Vec<f64>) -> Result<Self> {
        let na = env.num_actions();
        let rewards: Vec<Vec<f64>> = contexts
            .iter()
            .map(|x| (0..na).map(|a| env.expected_reward(x, ActionId(a))).collect())
            .collect();
        let costs: Vec<Vec<Vec<f64>>> = contexts
            .iter()
            .map(|x| (0..na).map(|a| env.expected_cost(x, ActionId(a))).collect())
            .collect();
        let n = contexts.len();
        Self::new(vec![1.0 / n as f64; n], &rewards, &costs, budget)
    }

    pub fn dim(&self) -> usize {
        self.budget.len()
    }

    pub fn num_contexts(&self) -> usize {
        self.weights.len()
    }

    pub fn budget(&self) -> &[f64] {
        &self.budget
    }

    pub fn with_budget(&self, budget: Vec<f64>) -> Result<Self> {
        if budget.len() != self.budget.len() {
            return Err(CbwkError::DimensionMismatch {
                expected: self.budget.len(),
                actual: budget.len(),
            });
        }
        Ok(Self {
            budget,
            ..self.clone()
        })
    }

    /// `G(λ)` and a subgradient, in one pass.
    pub fn value_and_subgradient(&self, lambda: &[f64]) -> (f64, Vec<f64>) {
        let d = self.budget.len();
        let penalties: Vec<f64> = self
            .unique_costs
            .iter()
            .map(|c| c.iter().zip(lambda).map(|(c, l)| c * l).sum())
            .collect();
        let mut cost_mass = vec![0.0; self.unique_costs.len()];
        let mut value = 0.0;
        let na = self.num_actions;
        for (x, w) in self.weights.iter().enumerate() {
            let base = x * na;
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for a in 0..na {
                let s = self.rewards[base + a] - penalties[self.cost_index[base + a]];
                if s > best_score {
                    best_score = s;
                    best = a;
                }
            }
            value += w * best_score;
            cost_mass[self.cost_index[base + best]] += w;
        }
        let b_lambda: f64 = self.budget.iter().zip(lambda).map(|(b, l)| b * l).sum();
        let mut grad = self.budget.clone();
        for (c, m) in self.unique_costs.iter().zip(&cost_mass) {
            if *m != 0.0 {
                for i in 0..d {
                    grad[i] -= m * c[i];
                }
            }
        }
        (value + b_lambda, grad)
    }
}

pub fn dual_objective(lambda: &DualVector, sample: &DualSample) -> f64 {
    sample.value_and_subgradient(lambda.as_slice()).0
}

/// `E[B − c(X, a*(X, λ))]`, ties to the lowest action index.
pub fn dual_subgradient(lambda: &DualVector, sample: &DualSample) -> Vec<f64> {
    sample.value_and_subgradient(lambda.as_slice()).1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualMinConfig {
    /// Iterations per pass.
    pub iters: usize,
    /// Base step `η₀`; `None` means `1/√d`.
    pub eta0: Option<f64>,
    /// Extra passes restarted from the best point with `η₀` halved each time.
    pub restarts: usize,
    /// Stop early once a whole pass improves the best value by less than this.
    pub tol: f64,
}

impl Default for DualMinConfig {
    fn default() -> Self {
        Self {
            iters: 5000,
            eta0: None,
            restarts: 8,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DualMinResult {
    pub lambda: DualVector,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Projected subgradient descent with normalized steps `η₀/√k`, tail averaging over the
/// last half of each pass, and restarts from the best point found.
pub fn minimize_dual(sample: &DualSample, cfg: &DualMinConfig) -> Result<DualMinResult> {
    if cfg.iters == 0 {
        return Err(invalid("at least one iteration is required"));
    }
    let d = sample.dim();
    let eta0 = cfg.eta0.unwrap_or(1.0 / (d as f64).sqrt());
    let mut best_lambda = vec![0.0; d];
    let (mut best_value, _) = sample.value_and_subgradient(&best_lambda);
    let mut iterations = 0;
    let mut converged = false;

    for pass in 0..=cfg.restarts {
        let eta = eta0 / 2f64.powi(pass as i32);
        let before = best_value;
        let mut lambda = best_lambda.clone();
        let mut avg = vec![0.0; d];
        let mut n_tail = 0usize;
        let tail_start = cfg.iters / 2 + 1;
        for k in 1..=cfg.iters {
            let (value, grad) = sample.value_and_subgradient(&lambda);
            if value < best_value {
                best_value = value;
                best_lambda.clone_from(&lambda);
            }
            let gnorm = norm2(&grad);
            if gnorm == 0.0 {
                break;
            }
            // normalized steps: flat stretches of G would otherwise stall
            let step = eta / ((k as f64).sqrt() * gnorm);
            for (l, g) in lambda.iter_mut().zip(&grad) {
                *l = (*l - step * g).max(0.0);
            }
            if k >= tail_start {
                for (a, l) in avg.iter_mut().zip(&lambda) {
                    *a += l;
                }
                n_tail += 1;
            }
        }
        iterations += cfg.iters;
        if n_tail > 0 {
            avg.iter_mut().for_each(|a| *a /= n_tail as f64);
            let (avg_value, _) = sample.value_and_subgradient(&avg);
            if avg_value < best_value {
                best_value = avg_value;
                best_lambda = avg;
            }
        }
        if pass > 0 && before - best_value <= cfg.tol {
            converged = true;
            break;
        }
    }

    let min_b = sample.budget().iter().cloned().fold(f64::INFINITY, f64::min);
    let norm = norm2(&best_lambda);
    if min_b > 0.0 && norm > 10.0 / min_b {
        warn!("dual minimizer has norm {norm:.3} above 10 / min B = {:.3}", 10.0 / min_b);
    }
    Ok(DualMinResult {
        lambda: DualVector::project(best_lambda),
        value: best_value,
        converged,
        iterations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptEstimate {
    pub value: f64,
    /// Standard error of the mean over repetitions.
    pub stderr: f64,
    pub reps: usize,
    pub lambda_star: DualVector,
    pub values: Vec<f64>,
}

/// `J` independent dual minimizations over `S` sampled contexts each; the
/// repetition `j` uses the seed `seed + j`.
pub fn estimate_opt(
    env: &dyn Environment,
    budget: &[f64],
    samples: usize,
    reps: usize,
    seed: u64,
    cfg: &DualMinConfig,
) -> Result<OptEstimate> {
    if samples == 0 || reps == 0 {
        return Err(invalid("samples and repetitions must be positive"));
    }
    if budget.len() != env.cost_dim() {
        return Err(CbwkError::DimensionMismatch {
            expected: env.cost_dim(),
            actual: budget.len(),
        });
    }
    let results: Vec<DualMinResult> = (0..reps)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(j as u64));
            let contexts: Vec<ContextVector> =
                (0..samples).map(|_| env.sample_context(&mut rng)).collect();
            let sample = DualSample::from_contexts(env, &contexts, budget.to_vec())?;
            minimize_dual(&sample, cfg)
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = results.iter().map(|r| r.value).collect();
    let n = reps as f64;
    let mean = values.iter().sum::<f64>() / n;
    let stderr = if reps > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let d = budget.len();
    let mut lam = vec![0.0; d];
    for r in &results {
        for (a, l) in lam.iter_mut().zip(r.lambda.as_slice()) {
            *a += l / n;
        }
    }
    Ok(OptEstimate {
        value: mean,
        stderr,
        reps,
        lambda_star: DualVector::project(lam),
        values,
    })
}

#[derive(Debug, Clone)]
pub struct ExactOpt {
    pub value: f64,
    /// Multipliers of the cost constraints, a minimizer of `G`.
    pub lambda_star: DualVector,
    pub policies: Vec<PolicyDistribution>,
}

/// Exact optimal static policy value of a finite instance, by linear programming.
pub fn brute_force_opt(
    weights: &[f64],
    rewards: &[Vec<f64>],
    costs: &[Vec<Vec<f64>>],
    budget: &[f64],
) -> Result<ExactOpt> {
    let sol = solve_constrained_policy(weights, rewards, costs, budget)?;
    if !sol.feasible {
        return Err(CbwkError::Infeasible);
    }
    Ok(ExactOpt {
        value: sol.objective,
        lambda_star: DualVector::project(sol.cost_duals),
        policies: sol.policies,
    })
}

pub fn brute_force_instance(inst: &FiniteInstance, budget: &[f64]) -> Result<ExactOpt> {
    brute_force_opt(&inst.weights, &inst.rewards, &inst.costs, budget)
}

/// Whether some static policy meets `budget − margin·1` strictly, checked by
/// maximizing the smallest slack.
pub fn strictly_feasible(inst: &FiniteInstance, budget: &[f64], margin: f64) -> Result<bool> {
    let nx = inst.num_contexts();
    let na = inst.num_actions();
    let n = nx * na;
    // variables: π (n entries) then the common slack s
    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    let mut lp = LinearProgram::maximize(objective);
    for x in 0..nx {
        let mut row = vec![0.0; n + 1];
        row[x * na..(x + 1) * na].iter_mut().for_each(|v| *v = 1.0);
        lp.add(row, Relation::Eq, 1.0)?;
    }
    for (i, b) in budget.iter().enumerate() {
        let mut row = vec![0.0; n + 1];
        for x in 0..nx {
            for a in 0..na {
                row[x * na + a] = inst.weights[x] * inst.costs[x][a][i];
            }
        }
        row[n] = 1.0;
        lp.add(row, Relation::Le, *b)?;
    }
    let mut cap = vec![0.0; n + 1];
    cap[n] = 1.0;
    lp.add(cap, Relation::Le, 2.0)?;
    Ok(match lp.solve() {
        LpOutcome::Optimal(sol) => sol.objective > margin,
        _ => false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaBoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl LambdaBoundCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            holds: lhs <= rhs + 1e-6,
        }
    }

    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// `‖λ*_{B−b1}‖ ≤ (OPT(B−b1) − OPT(B̃)) / min(B − b1 − B̃)`.
pub fn lambda_norm_bound_check(inst: &FiniteInstance, b: f64, b_tilde: &[f64]) -> Result<LambdaBoundCheck> {
    let budget = &inst.budget;
    let min_b = budget.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(b >= 0.0 && b < min_b) {
        return Err(invalid("margin must lie in [0, min B)"));
    }
    let target: Vec<f64> = budget.iter().map(|v| v - b).collect();
    if b_tilde.len() != target.len() || b_tilde.iter().zip(&target).any(|(bt, t)| !(*bt >= 0.0 && bt < t)) {
        return Err(invalid("B̃ must satisfy 0 ≤ B̃ < B − b·1"));
    }
    // feasibility strictly below B̃
    if !strictly_feasible(inst, b_tilde, 0.0)? {
        return Err(invalid("instance is not feasible below B̃"));
    }
    let at_target = brute_force_instance(inst, &target)?;
    let at_tilde = brute_force_instance(inst, b_tilde)?;
    let gap = target
        .iter()
        .zip(b_tilde)
        .map(|(t, bt)| t - bt)
        .fold(f64::INFINITY, f64::min);
    Ok(LambdaBoundCheck::new(
        at_target.lambda_star.norm(),
        (at_target.value - at_tilde.value) / gap,
    ))
}

/// With a null-cost action: `‖λ*_{B−b1}‖ ≤ 2 (OPT(B) − OPT(0)) / min B` for
/// `b ∈ [0, min B / 2]`.
pub fn null_action_bound_check(inst: &FiniteInstance, b: f64) -> Result<LambdaBoundCheck> {
    let Some(null) = inst.null_action else {
        return Err(invalid("instance declares no null-cost action"));
    };
    if inst.costs.iter().any(|cx| cx[null].iter().any(|v| *v != 0.0)) {
        return Err(invalid("declared null action has nonzero cost"));
    }
    let budget = &inst.budget;
    let min_b = budget.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(b >= 0.0 && b <= min_b / 2.0) {
        return Err(invalid("margin must lie in [0, min B / 2]"));
    }
    let target: Vec<f64> = budget.iter().map(|v| v - b).collect();
    let lhs = brute_force_instance(inst, &target)?.lambda_star.norm();
    let full = brute_force_instance(inst, budget)?.value;
    let zero = brute_force_instance(inst, &vec![0.0; budget.len()])?.value;
    Ok(LambdaBoundCheck::new(lhs, 2.0 * (full - zero) / min_b))
}

/// Scalar-cost family with a null action and all other costs at least
/// `alpha`: `OPT(B) − OPT(0) ≤ B/α`.
pub fn example_alpha_check(inst: &FiniteInstance, alpha: f64) -> Result<LambdaBoundCheck> {
    if inst.cost_dim() != 1 {
        return Err(invalid("the family has scalar costs"));
    }
    let Some(null) = inst.null_action else {
        return Err(invalid("the family needs a null-cost action"));
    };
    for cx in &inst.costs {
        for (a, c) in cx.iter().enumerate() {
            if (a == null && c[0] != 0.0) || (a != null && c[0] < alpha) {
                return Err(invalid("costs violate the family's hypotheses"));
            }
        }
    }
    let b = inst.budget[0];
    let full = brute_force_instance(inst, &inst.budget)?.value;
    let zero = brute_force_instance(inst, &[0.0])?.value;
    Ok(LambdaBoundCheck::new(full - zero, b / alpha))
}

/// Lagrangian policy with fixed multipliers: plays the maximizer of
/// `r_ucb − ⟨c_lcb − target, λ⟩` and never updates `λ`.
pub struct MixedPolicy {
    lambda: DualVector,
    target: Vec<f64>,
    num_actions: usize,
}

impl MixedPolicy {
    pub fn new(lambda: DualVector, target: Vec<f64>, num_actions: usize) -> Result<Self> {
        if lambda.dim() != target.len() {
            return Err(CbwkError::DimensionMismatch {
                expected: target.len(),
                actual: lambda.dim(),
            });
        }
        if num_actions == 0 {
            return Err(invalid("empty action set"));
        }
        Ok(Self {
            lambda,
            target,
            num_actions,
        })
    }
}

pub fn mixed_policy_action(
    x: &ContextVector,
    est: &dyn Estimator,
    lambda: &DualVector,
    target: &[f64],
    num_actions: usize,
) -> Result<ActionId> {
    let (ucb, lcb) = optimistic_scores(est, x, num_actions);
    select_action(&ucb, &lcb, target, lambda)
}

impl Strategy for MixedPolicy {
    fn choose(&mut self, est: &dyn Estimator, x: &ContextVector, _rng: &mut dyn RngCore) -> ActionId {
        mixed_policy_action(x, est, &self.lambda, &self.target, self.num_actions)
            .expect("action set checked at construction")
    }

    fn observe(&mut self, _est: &dyn Estimator, _x: &ContextVector, _a: ActionId, _r: f64, _c: &[f64]) {}

    fn lambda(&self) -> DualVector {
        self.lambda.clone()
    }
}
