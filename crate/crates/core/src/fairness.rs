//! Group-fairness costs and the court-appearance simulator.
//!
//! The general construction turns a spending cost `c_spd` into the vector
//!
//! ```text
//!   (c_spd, (c_spd·1{gr=g} − γ_g c_spd, γ_g c_spd − c_spd·1{gr=g})_{g ∈ G})
//! ```
//!
//! whose fairness components average to zero over groups. The court
//! environment uses the scaled variant `2·1{a}·1{gr=g} − 1{a}` for two equally
//! likely groups and two assistance actions.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimators::{sigmoid, FeatureMap};
use crate::problem::{ActionId, BudgetVector, ContextVector, Environment};

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    proportions: Vec<f64>,
}

impl GroupSpec {
    pub fn new(proportions: Vec<f64>) -> Result<Self> {
        if proportions.is_empty() {
            return Err(invalid("at least one group is required"));
        }
        if proportions.iter().any(|g| !(*g > 0.0 && *g <= 1.0)) {
            return Err(invalid("group proportions must lie in (0, 1]"));
        }
        if (proportions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid("group proportions must sum to 1"));
        }
        Ok(Self { proportions })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            proportions: vec![1.0 / n as f64; n],
        }
    }

    pub fn proportions(&self) -> &[f64] {
        &self.proportions
    }

    pub fn num_groups(&self) -> usize {
        self.proportions.len()
    }
}

/// Fairness-augmented cost mapping with its budget.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessMapping {
    pub groups: GroupSpec,
    pub budget_total: f64,
    pub tau: f64,
}

impl FairnessMapping {
    pub fn output_dim(&self) -> usize {
        1 + 2 * self.groups.num_groups()
    }

    pub fn cost(&self, c_spd: f64, group: usize) -> Result<Vec<f64>> {
        build_fairness_cost(c_spd, group, &self.groups)
    }

    pub fn budget(&self) -> Result<BudgetVector> {
        build_fairness_budget(self.budget_total, self.tau, &self.groups)
    }
}

pub fn build_fairness_cost(c_spd: f64, group: usize, spec: &GroupSpec) -> Result<Vec<f64>> {
    if group >= spec.num_groups() {
        return Err(invalid(format!(
            "group {group} out of range for {} groups",
            spec.num_groups()
        )));
    }
    let bound = spec
        .proportions
        .iter()
        .map(|g| if *g < 1.0 { 1.0 / (1.0 - g) } else { f64::INFINITY })
        .fold(f64::INFINITY, f64::min)
        .min(1.0);
    if !c_spd.is_finite() || c_spd.abs() > bound {
        return Err(invalid(format!("spending cost {c_spd} outside [-{bound}, {bound}]")));
    }
    let mut out = Vec::with_capacity(1 + 2 * spec.num_groups());
    out.push(c_spd);
    for (g, gamma) in spec.proportions.iter().enumerate() {
        let own = if g == group { c_spd } else { 0.0 };
        out.push(own - gamma * c_spd);
        out.push(gamma * c_spd - own);
    }
    Ok(out)
}

pub fn build_fairness_budget(budget_total: f64, tau: f64, spec: &GroupSpec) -> Result<BudgetVector> {
    let mut b = Vec::with_capacity(1 + 2 * spec.num_groups());
    b.push(budget_total);
    for gamma in &spec.proportions {
        b.push(gamma * tau);
        b.push(gamma * tau);
    }
    BudgetVector::new(b)
}

pub const CONTROL: ActionId = ActionId(0);
pub const VOUCHER: ActionId = ActionId(1);
pub const RIDE: ActionId = ActionId(2);

pub const COURT_MU_STAR: [f64; 5] = [-1.0, 1.0, 1.0, 2.0, 2.0];
pub const COURT_BUDGET_RIDE: f64 = 0.05;
pub const COURT_BUDGET_VOUCHER: f64 = 0.20;
pub const COURT_COST_DIM: usize = 10;
pub const COURT_NUM_ACTIONS: usize = 3;

/// `φ(x, a) ∈ R⁵` for a court context `(age, prox, pov)` with its group.
#[derive(Debug, Clone, Copy, Default)]
pub struct CourtFeatureMap;

impl FeatureMap for CourtFeatureMap {
    fn dim(&self) -> usize {
        5
    }

    fn write(&self, x: &ContextVector, a: ActionId, out: &mut [f64]) {
        let (age, prox, pov) = (x.coords[0], x.coords[1], x.coords[2]);
        let g0 = if x.group == Some(0) { 1.0 } else { 0.0 };
        let v = if a == VOUCHER { 1.0 } else { 0.0 };
        let r = if a == RIDE { 1.0 } else { 0.0 };
        out[0] = age;
        out[1] = prox * v;
        out[2] = prox * v * g0;
        out[3] = pov * r;
        out[4] = pov * r * g0;
    }
}

/// Link used for the court rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmoidConvention {
    /// `1 / (1 + e^{−u})`.
    #[default]
    Standard,
    /// `1 / (1 + e^{u})`, kept for sensitivity runs only.
    Flipped,
}

#[derive(Debug, Clone)]
pub struct CourtEnvironment {
    pub tau: f64,
    pub convention: SigmoidConvention,
}

impl CourtEnvironment {
    pub fn new(tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(invalid("fairness tolerance must lie in [0, 1]"));
        }
        Ok(Self {
            tau,
            convention: SigmoidConvention::Standard,
        })
    }

    pub fn with_convention(mut self, convention: SigmoidConvention) -> Self {
        self.convention = convention;
        self
    }

    /// `(0.05, 0.2, τ, …, τ)` with one τ per fairness component.
    pub fn budget(&self) -> BudgetVector {
        let mut b = vec![COURT_BUDGET_RIDE, COURT_BUDGET_VOUCHER];
        b.extend(std::iter::repeat_n(self.tau, 8));
        BudgetVector::new(b).expect("court budget is in range")
    }

    /// Budget with margin `b` removed from the two spending components only.
    pub fn margin_budget(&self, b: f64) -> Vec<f64> {
        self.budget().with_leading_margin(b, 2)
    }

    pub fn context(age: f64, prox: f64, pov: f64, group: usize) -> ContextVector {
        ContextVector::new(vec![age, prox, pov])
            .expect("finite coordinates")
            .with_group(group)
    }
}

pub fn court_expected_reward(x: &ContextVector, a: ActionId, convention: SigmoidConvention) -> f64 {
    let mut phi = [0.0; 5];
    CourtFeatureMap.write(x, a, &mut phi);
    let u: f64 = phi.iter().zip(COURT_MU_STAR).map(|(p, m)| p * m).sum();
    match convention {
        SigmoidConvention::Standard => sigmoid(u),
        SigmoidConvention::Flipped => sigmoid(-u),
    }
}

/// Ride, voucher, then `2·1{a}·1{gr=g} − 1{a}` for (ride, g0), (ride, g1),
/// (voucher, g0), (voucher, g1), then the same four negated.
pub fn court_cost(x: &ContextVector, a: ActionId) -> Vec<f64> {
    let ride = if a == RIDE { 1.0 } else { 0.0 };
    let voucher = if a == VOUCHER { 1.0 } else { 0.0 };
    let g = x.group.unwrap_or(0);
    let fair = |ind: f64, grp: usize| 2.0 * ind * if g == grp { 1.0 } else { 0.0 } - ind;
    let first = [fair(ride, 0), fair(ride, 1), fair(voucher, 0), fair(voucher, 1)];
    let mut out = Vec::with_capacity(COURT_COST_DIM);
    out.push(ride);
    out.push(voucher);
    out.extend_from_slice(&first);
    out.extend(first.iter().map(|v| -v));
    out
}

/// Mean absolute value of the first fairness series of a cost vector (or of
/// a running average of cost vectors).
pub fn court_fairness_metric(avg_cost: &[f64]) -> f64 {
    avg_cost[2..6].iter().map(|v| v.abs()).sum::<f64>() / 4.0
}

impl Environment for CourtEnvironment {
    fn num_actions(&self) -> usize {
        COURT_NUM_ACTIONS
    }

    fn cost_dim(&self) -> usize {
        COURT_COST_DIM
    }

    fn sample_context(&self, rng: &mut dyn RngCore) -> ContextVector {
        let age = rng.random::<f64>();
        let prox = rng.random::<f64>();
        let pov = rng.random::<f64>();
        let group = usize::from(rng.random::<bool>());
        Self::context(age, prox, pov, group)
    }

    fn expected_reward(&self, x: &ContextVector, a: ActionId) -> f64 {
        court_expected_reward(x, a, self.convention)
    }

    fn expected_cost(&self, x: &ContextVector, a: ActionId) -> Vec<f64> {
        court_cost(x, a)
    }

    fn sample_reward(&self, x: &ContextVector, a: ActionId, rng: &mut dyn RngCore) -> f64 {
        let p = self.expected_reward(x, a);
        if rng.random::<f64>() < p {
            1.0
        } else {
            0.0
        }
    }

    fn sample_cost(&self, x: &ContextVector, a: ActionId, _rng: &mut dyn RngCore) -> Vec<f64> {
        court_cost(x, a)
    }
}
