//! Primal strategy for finite context sets.
//!
//! Each round solves
//!
//! ```text
//!   max_π  Σ_x ν̂_{t−1}(x) Σ_a r_ucb(x, a) π_a(x)
//!   s.t.   Σ_x ν̂_{t−1}(x) Σ_a c_lcb(x, a) π_a(x) ≤ B + b_t·1
//! ```
//!
//! over per-context action distributions, then samples `a_t ∼ π_t(x_t)`.
//! The slack `b_t` is positive (soft constraints) or negative (hard
//! constraints) according to the chosen schedule.

use log::debug;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CbwkError, Result};
use crate::estimators::Estimator;
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::problem::{ActionId, ContextVector, DualVector, PolicyDistribution};
use crate::strategy::Strategy;

pub const DEFAULT_XI_CONSTANT: f64 = std::f64::consts::SQRT_2;

/// `c·√(n ln(2/δ) / max(t, 1))`, capped at 1.
pub fn xi(t: usize, delta: f64, support_size: usize, constant: f64) -> f64 {
    let v = constant * (support_size as f64 * (2.0 / delta).ln() / t.max(1) as f64).sqrt();
    v.min(1.0)
}

/// `Ξ_{T,δ} = Σ_{t=1}^{T} ξ_{t−1,δ}`.
pub fn xi_sum(horizon: usize, delta: f64, support_size: usize, constant: f64) -> f64 {
    (0..horizon).map(|t| xi(t, delta, support_size, constant)).sum()
}

/// `α_{T,δ/4} = √(2T ln((d+1)/(δ/4)))`.
pub fn alpha_prop(horizon: usize, delta: f64, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(invalid("cost dimension must be positive"));
    }
    let q = delta / 4.0;
    Ok((2.0 * horizon as f64 * ((d as f64 + 1.0) / q).ln()).sqrt())
}

/// `α_{t,δ/4} = √(2t ln(2(d+1)T/(δ/4)))`.
pub fn alpha_seq(t: usize, delta: f64, d: usize, horizon: usize) -> Result<f64> {
    if d == 0 {
        return Err(invalid("cost dimension must be positive"));
    }
    let q = delta / 4.0;
    Ok((2.0 * t as f64 * (2.0 * (d as f64 + 1.0) * horizon as f64 / q).ln()).sqrt())
}

/// `(Δ̄, Δ̄′) = ((2α + β + Ξ)/T, (2α + β + 2Ξ)/T)`.
pub fn delta_bars(horizon: usize, alpha: f64, beta: f64, xi_total: f64) -> (f64, f64) {
    let t = horizon as f64;
    ((2.0 * alpha + beta + xi_total) / t, (2.0 * alpha + beta + 2.0 * xi_total) / t)
}

/// Empirical distribution over a declared finite support. In `known` mode the
/// true weights are used and the error `ξ` is zero.
#[derive(Debug, Clone)]
pub struct EmpiricalContextDistribution {
    counts: Vec<usize>,
    t: usize,
    xi_constant: f64,
    known: Option<Vec<f64>>,
}

impl EmpiricalContextDistribution {
    pub fn new(support_size: usize) -> Self {
        Self {
            counts: vec![0; support_size],
            t: 0,
            xi_constant: DEFAULT_XI_CONSTANT,
            known: None,
        }
    }

    pub fn known(weights: Vec<f64>) -> Self {
        Self {
            counts: vec![0; weights.len()],
            t: 0,
            xi_constant: 0.0,
            known: Some(weights),
        }
    }

    pub fn with_xi_constant(mut self, c: f64) -> Self {
        if self.known.is_none() {
            self.xi_constant = c;
        }
        self
    }

    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    pub fn observations(&self) -> usize {
        self.t
    }

    pub fn is_known(&self) -> bool {
        self.known.is_some()
    }

    pub fn observe(&mut self, index: usize) -> Result<()> {
        let n = self.counts.len();
        let slot = self
            .counts
            .get_mut(index)
            .ok_or_else(|| invalid(format!("context {index} outside the declared support of size {n}")))?;
        *slot += 1;
        self.t += 1;
        Ok(())
    }

    /// Current probabilities; all zero before the first observation.
    pub fn probs(&self) -> Vec<f64> {
        match &self.known {
            Some(w) => w.clone(),
            None if self.t == 0 => vec![0.0; self.counts.len()],
            None => self.counts.iter().map(|c| *c as f64 / self.t as f64).collect(),
        }
    }

    /// `ξ_{t,δ}` at the current number of observations.
    pub fn xi(&self, delta: f64) -> f64 {
        if self.known.is_some() {
            0.0
        } else {
            xi(self.t, delta, self.counts.len(), self.xi_constant)
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpPolicySolution {
    pub policies: Vec<PolicyDistribution>,
    pub objective: f64,
    pub feasible: bool,
    /// Multipliers of the cost rows (zeros when infeasible).
    pub cost_duals: Vec<f64>,
}

/// Solves the per-round program. `ucb[x][a]`, `lcb[x][a][i]`.
pub fn solve_constrained_policy(
    weights: &[f64],
    ucb: &[Vec<f64>],
    lcb: &[Vec<Vec<f64>>],
    rhs: &[f64],
) -> Result<LpPolicySolution> {
    let nx = weights.len();
    if nx == 0 || ucb.len() != nx || lcb.len() != nx {
        return Err(invalid("policy program tables must have one row per context"));
    }
    let na = ucb[0].len();
    let d = rhs.len();
    if na == 0 {
        return Err(invalid("empty action set"));
    }
    for (u, l) in ucb.iter().zip(lcb) {
        if u.len() != na || l.len() != na || l.iter().any(|c| c.len() != d) {
            return Err(CbwkError::DimensionMismatch {
                expected: na,
                actual: u.len(),
            });
        }
    }
    let n = nx * na;
    let mut objective = vec![0.0; n];
    for x in 0..nx {
        for a in 0..na {
            objective[x * na + a] = weights[x] * ucb[x][a];
        }
    }
    let mut lp = LinearProgram::maximize(objective);
    for x in 0..nx {
        let mut row = vec![0.0; n];
        row[x * na..(x + 1) * na].iter_mut().for_each(|v| *v = 1.0);
        lp.add(row, Relation::Eq, 1.0)?;
    }
    for (i, b) in rhs.iter().enumerate() {
        let mut row = vec![0.0; n];
        for x in 0..nx {
            for a in 0..na {
                row[x * na + a] = weights[x] * lcb[x][a][i];
            }
        }
        lp.add(row, Relation::Le, *b)?;
    }
    match lp.solve() {
        LpOutcome::Optimal(sol) => {
            let policies = (0..nx)
                .map(|x| {
                    PolicyDistribution::from_weights(&sol.x[x * na..(x + 1) * na])
                        .unwrap_or_else(|_| PolicyDistribution::uniform(na))
                })
                .collect();
            Ok(LpPolicySolution {
                policies,
                objective: sol.objective,
                feasible: true,
                cost_duals: sol.duals[nx..].iter().map(|v| v.max(0.0)).collect(),
            })
        }
        other => {
            debug!("policy program not solved: {other:?}");
            Ok(LpPolicySolution {
                policies: vec![PolicyDistribution::uniform(na); nx],
                objective: f64::NAN,
                feasible: false,
                cost_duals: vec![0.0; d],
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlackMode {
    /// `b_t = ξ_{t−1,δ/4}`.
    Soft,
    /// `b_t = −Δ̄`, for instances with a null-cost action.
    HardNull,
    /// `b_t = −Δ̄′ + ξ_{t−1,δ/4}`.
    HardGeneral,
}

/// Value of `β_{T,δ/4}` entering `Δ̄` and `Δ̄′`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum BetaSource {
    /// The estimator's running β at the current round.
    Running,
    Fixed(f64),
    /// `C_β √T ln(4T/δ′)` with `δ′ = δ/4`.
    Theoretical(f64),
}

#[derive(Debug, Clone)]
pub struct SlackSchedule {
    pub mode: SlackMode,
    pub horizon: usize,
    pub delta: f64,
    pub alpha: f64,
    pub xi_total: f64,
    pub beta: BetaSource,
}

impl SlackSchedule {
    pub fn new(
        mode: SlackMode,
        horizon: usize,
        delta: f64,
        d: usize,
        nu: &EmpiricalContextDistribution,
        beta: BetaSource,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(invalid("horizon must be positive"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid("delta must lie in (0, 1)"));
        }
        let xi_total = if nu.is_known() {
            0.0
        } else {
            xi_sum(horizon, delta / 4.0, nu.support_size(), nu.xi_constant)
        };
        Ok(Self {
            mode,
            horizon,
            delta,
            alpha: alpha_prop(horizon, delta, d)?,
            xi_total,
            beta,
        })
    }

    pub fn beta_value(&self, running: f64) -> f64 {
        match self.beta {
            BetaSource::Running => running,
            BetaSource::Fixed(v) => v,
            BetaSource::Theoretical(c) => {
                let t = self.horizon as f64;
                c * t.sqrt() * (4.0 * t / (self.delta / 4.0)).ln()
            }
        }
    }

    /// Slack for a round whose program uses `ν̂` with error `xi_prev`.
    pub fn slack(&self, xi_prev: f64, running_beta: f64) -> f64 {
        let (bar, bar_prime) =
            delta_bars(self.horizon, self.alpha, self.beta_value(running_beta), self.xi_total);
        match self.mode {
            SlackMode::Soft => xi_prev,
            SlackMode::HardNull => -bar,
            SlackMode::HardGeneral => -bar_prime + xi_prev,
        }
    }

    /// `2α + β + 2Ξ`, the soft-constraint overshoot allowance.
    pub fn soft_allowance(&self, beta: f64) -> f64 {
        2.0 * self.alpha + beta + 2.0 * self.xi_total
    }
}

/// Box-D strategy over a declared finite support.
pub struct PrimalStrategy {
    support: Vec<ContextVector>,
    nu: EmpiricalContextDistribution,
    schedule: SlackSchedule,
    budget: Vec<f64>,
    num_actions: usize,
    null_action: Option<ActionId>,
    fallbacks: usize,
    last_duals: Vec<f64>,
}

impl PrimalStrategy {
    pub fn new(
        support: Vec<ContextVector>,
        nu: EmpiricalContextDistribution,
        schedule: SlackSchedule,
        budget: Vec<f64>,
        num_actions: usize,
        null_action: Option<ActionId>,
    ) -> Result<Self> {
        if support.len() != nu.support_size() {
            return Err(invalid("support and context distribution sizes differ"));
        }
        if support.iter().enumerate().any(|(i, x)| x.support_index != Some(i)) {
            return Err(invalid("support contexts must carry their own index"));
        }
        if num_actions == 0 {
            return Err(invalid("empty action set"));
        }
        let d = budget.len();
        Ok(Self {
            support,
            nu,
            schedule,
            budget,
            num_actions,
            null_action,
            fallbacks: 0,
            last_duals: vec![0.0; d],
        })
    }

    pub fn schedule(&self) -> &SlackSchedule {
        &self.schedule
    }

    pub fn distribution(&self) -> &EmpiricalContextDistribution {
        &self.nu
    }

    /// The round's program with the current estimates and slack.
    pub fn current_program(&self, est: &dyn Estimator) -> Result<LpPolicySolution> {
        let slack = self.schedule.slack(self.nu.xi(self.schedule.delta / 4.0), est.beta());
        let rhs: Vec<f64> = self.budget.iter().map(|b| b + slack).collect();
        let mut ucb = Vec::with_capacity(self.support.len());
        let mut lcb = Vec::with_capacity(self.support.len());
        for x in &self.support {
            let (u, l): (Vec<f64>, Vec<Vec<f64>>) = (0..self.num_actions)
                .map(|a| (est.reward_ucb(x, ActionId(a)), est.cost_lcb(x, ActionId(a))))
                .unzip();
            ucb.push(u);
            lcb.push(l);
        }
        solve_constrained_policy(&self.nu.probs(), &ucb, &lcb, &rhs)
    }
}

impl Strategy for PrimalStrategy {
    fn choose(&mut self, est: &dyn Estimator, x: &ContextVector, rng: &mut dyn RngCore) -> ActionId {
        let i = x
            .support_index
            .filter(|i| *i < self.support.len())
            .expect("primal strategy needs contexts from the declared support");
        let sol = self
            .current_program(est)
            .expect("program dimensions checked at construction");
        if sol.feasible {
            self.last_duals = sol.cost_duals;
            return sol.policies[i].sample(rng);
        }
        self.fallbacks += 1;
        match self.null_action {
            Some(a) => a,
            None => PolicyDistribution::uniform(self.num_actions).sample(rng),
        }
    }

    fn observe(&mut self, _est: &dyn Estimator, x: &ContextVector, _a: ActionId, _r: f64, _c: &[f64]) {
        if let Some(i) = x.support_index {
            // contexts are validated in `choose`
            let _ = self.nu.observe(i);
        }
    }

    fn lambda(&self) -> DualVector {
        DualVector::project(self.last_duals.clone())
    }

    fn fallback_count(&self) -> usize {
        self.fallbacks
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xi_is_capped_and_decreasing() {
        assert_eq!(xi(0, 0.05, 4, DEFAULT_XI_CONSTANT), 1.0);
        let mut prev = f64::INFINITY;
        for t in [1, 10, 100, 1_000, 10_000, 100_000] {
            let v = xi(t, 0.05, 4, DEFAULT_XI_CONSTANT);
            assert!(v <= prev && v <= 1.0);
            prev = v;
        }
        assert!(prev < 0.02);
    }

    #[test]
    fn xi_sum_grows_like_sqrt() {
        for t in [100, 1_000, 10_000, 100_000] {
            let ratio = xi_sum(t, 0.0125, 3, DEFAULT_XI_CONSTANT) / (t as f64).sqrt();
            // 2c√(n ln(2/δ)) is the asymptote
            let limit = 2.0 * DEFAULT_XI_CONSTANT * (3.0 * 160f64.ln()).sqrt();
            assert!(ratio <= limit + 1e-9, "{ratio} vs {limit}");
        }
    }

    #[test]
    fn alpha_forms() {
        let a = alpha_prop(10_000, 0.05, 10).unwrap();
        assert!((a - (20_000.0 * 880f64.ln()).sqrt()).abs() < 1e-9);
        assert!((a - 368.2).abs() < 0.05, "{a}");
        let ratio = alpha_prop(40_000, 0.05, 10).unwrap() / a;
        assert!((ratio - 2.0).abs() < 1e-12);
        assert!(alpha_prop(100, 0.05, 0).is_err());
        assert!(alpha_seq(100, 0.05, 0, 100).is_err());
        let s = alpha_seq(50, 0.05, 2, 100).unwrap();
        assert!((s - (100.0 * (600.0 / 0.0125f64).ln()).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn delta_bar_relations() {
        let (a, b) = delta_bars(100, 3.0, 2.0, 0.0);
        assert_eq!(a, b);
        assert_eq!(delta_bars(100, 0.0, 0.0, 0.0), (0.0, 0.0));
        let (a1, b1) = delta_bars(100, 3.0, 2.0, 5.0);
        let (a2, b2) = delta_bars(100, 3.0, 2.0, 10.0);
        assert!(((a2 - a1) - 0.05).abs() < 1e-12);
        assert!(((b2 - b1) - 0.10).abs() < 1e-12);
        assert!(b2 >= a2);
    }

    #[test]
    fn two_action_mixture() {
        let sol = solve_constrained_policy(
            &[1.0],
            &[vec![0.0, 1.0]],
            &[vec![vec![0.0], vec![1.0]]],
            &[0.3],
        )
        .unwrap();
        assert!(sol.feasible);
        assert!((sol.objective - 0.3).abs() < 1e-9);
        assert!((sol.policies[0].probs()[0] - 0.7).abs() < 1e-9);
        assert!((sol.cost_duals[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn slack_budget_gives_point_mass() {
        let sol = solve_constrained_policy(
            &[1.0],
            &[vec![0.2, 0.9, 0.5]],
            &[vec![vec![0.1], vec![0.6], vec![0.0]]],
            &[0.7],
        )
        .unwrap();
        assert_eq!(sol.policies[0].probs(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn infeasible_without_null_action() {
        let sol = solve_constrained_policy(
            &[0.5, 0.5],
            &[vec![0.2, 0.9], vec![0.4, 0.1]],
            &[vec![vec![0.3], vec![0.6]], vec![vec![0.4], vec![0.5]]],
            &[0.1],
        )
        .unwrap();
        assert!(!sol.feasible);
    }

    #[test]
    fn empirical_distribution() {
        let mut nu = EmpiricalContextDistribution::new(3);
        assert_eq!(nu.probs(), vec![0.0; 3]);
        nu.observe(0).unwrap();
        nu.observe(2).unwrap();
        nu.observe(2).unwrap();
        let p = nu.probs();
        assert!((p[2] - 2.0 / 3.0).abs() < 1e-15 && p[1] == 0.0);
        assert!(nu.observe(3).is_err());
        let known = EmpiricalContextDistribution::known(vec![0.2, 0.8]);
        assert_eq!(known.xi(0.01), 0.0);
    }

    #[test]
    fn slack_signs() {
        let nu = EmpiricalContextDistribution::new(3);
        for (mode, sign) in [(SlackMode::Soft, 1.0), (SlackMode::HardNull, -1.0)] {
            let s = SlackSchedule::new(mode, 1000, 0.05, 2, &nu, BetaSource::Fixed(5.0)).unwrap();
            assert!(sign * s.slack(0.1, 0.0) > 0.0);
        }
        let s = SlackSchedule::new(SlackMode::HardGeneral, 1000, 0.05, 2, &nu, BetaSource::Running)
            .unwrap();
        let (_, bar_prime) = delta_bars(1000, s.alpha, 3.0, s.xi_total);
        assert!((s.slack(0.2, 3.0) - (0.2 - bar_prime)).abs() < 1e-12);
    }
}
