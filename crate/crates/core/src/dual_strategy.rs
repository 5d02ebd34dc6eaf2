//! Projected-gradient dual strategies.
//!
//! The fixed-step strategy keeps dual variables `λ ≥ 0` and each round plays
//!
//! ```text
//!   a_t ∈ argmax_a  r_ucb(x_t, a) − ⟨c_lcb(x_t, a) − target, λ_{t−1}⟩
//!   λ_t = (λ_{t−1} + γ (c_lcb(x_t, a_t) − target))_+
//! ```
//!
//! where `target` is the budget vector minus a margin. The adaptive strategy
//! runs it in regimes `k = 0, 1, ...` with step sizes `γ_k = 2^k / √T`,
//! restarting from `λ = 0` (estimators persist) whenever the realized costs
//! of the current regime exceed `(t − T_k + 1)·target` by more than `M_k` in
//! Euclidean norm of the positive part.

use log::warn;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimators::Estimator;
use crate::problem::{dot, positive_part_norm, ActionId, ContextVector, DualVector};
use crate::strategy::{optimistic_scores, Strategy};

/// Maximizer of `ucb(a) − ⟨lcb(a) − target, λ⟩`, ties to the lowest index.
pub fn select_action(
    ucb: &[f64],
    lcb: &[Vec<f64>],
    target: &[f64],
    lambda: &DualVector,
) -> Result<ActionId> {
    if ucb.is_empty() {
        return Err(invalid("empty action set"));
    }
    if ucb.len() != lcb.len() {
        return Err(invalid("ucb and lcb disagree on the number of actions"));
    }
    let lam = lambda.as_slice();
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (a, (u, l)) in ucb.iter().zip(lcb).enumerate() {
        let penalty: f64 = l
            .iter()
            .zip(target)
            .zip(lam)
            .map(|((c, b), w)| (c - b) * w)
            .sum();
        let score = u - penalty;
        if score > best_score {
            best_score = score;
            best = a;
        }
    }
    Ok(ActionId(best))
}

/// `(λ + γ (lcb − target))_+`.
pub fn dual_update(lambda: &DualVector, lcb_played: &[f64], target: &[f64], gamma: f64) -> DualVector {
    debug_assert!(gamma > 0.0);
    DualVector::project(
        lambda
            .as_slice()
            .iter()
            .zip(lcb_played)
            .zip(target)
            .map(|((l, c), b)| l + gamma * (c - b))
            .collect(),
    )
}

/// `Υ_{T,δ} = max{β, 2√(dT ln(T²/(δ/4))), √(2T ln(2(d+1)T/(δ/4)))}` where
/// `beta_bound` stands for `β_{T,δ/4}`.
pub fn upsilon(horizon: usize, delta: f64, d: usize, beta_bound: f64) -> f64 {
    let t = horizon as f64;
    let d = d as f64;
    let q = delta / 4.0;
    let dev = 2.0 * (d * t * (t * t / q).ln()).sqrt();
    let mart = (2.0 * t * (2.0 * (d + 1.0) * t / q).ln()).sqrt();
    beta_bound.max(dev).max(mart)
}

/// `⌈log₂ x⌉`.
pub fn ilog(x: f64) -> Result<u32> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(invalid(format!("ilog of non-positive value {x}")));
    }
    let mut k = x.log2().ceil();
    // guard against log2 round-off around exact powers of two
    if 2f64.powf(k - 1.0) >= x {
        k -= 1.0;
    } else if 2f64.powf(k) < x {
        k += 1.0;
    }
    Ok(k.max(0.0) as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// `4√T + 20√d Υ_{T, δ/(k+2)²}` with `β̄ = C_β √T ln(4T/δ′)`.
    Theoretical,
    /// `c d √(T ln(T (k+2)))`.
    Practical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum MarginMode {
    AutoBt,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    pub delta: f64,
    pub horizon: usize,
    pub d: usize,
    pub threshold_mode: ThresholdMode,
    pub practical_c: f64,
    pub beta_constant: f64,
    pub margin_mode: MarginMode,
}

impl AdaptiveConfig {
    pub fn practical(horizon: usize, d: usize, delta: f64, c: f64, margin: f64) -> Self {
        Self {
            delta,
            horizon,
            d,
            threshold_mode: ThresholdMode::Practical,
            practical_c: c,
            beta_constant: 1.0,
            margin_mode: MarginMode::Fixed(margin),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(invalid("horizon must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta must lie in (0, 1)"));
        }
        if self.d == 0 {
            return Err(invalid("cost dimension must be positive"));
        }
        if !(self.practical_c > 0.0) {
            return Err(invalid("practical threshold constant must be positive"));
        }
        Ok(())
    }

    /// Margin `b` used on the budget: the configured one or `b_T`.
    pub fn margin(&self) -> f64 {
        match self.margin_mode {
            MarginMode::Fixed(b) => b,
            MarginMode::AutoBt => margin_bt(self),
        }
    }

    /// Step size of regime `k`.
    pub fn gamma(&self, k: u32) -> f64 {
        2f64.powi(k as i32) / (self.horizon as f64).sqrt()
    }

    /// Index of the last regime allowed, `ilog T`.
    pub fn max_regime(&self) -> u32 {
        ilog(self.horizon as f64).unwrap_or(0)
    }
}

/// Cost-deviation threshold `M_{T,δ,k}` ending regime `k`.
pub fn regime_threshold(k: u32, cfg: &AdaptiveConfig) -> f64 {
    let t = cfg.horizon as f64;
    let kk = k as f64 + 2.0;
    match cfg.threshold_mode {
        ThresholdMode::Practical => cfg.practical_c * cfg.d as f64 * (t * (t * kk).ln()).sqrt(),
        ThresholdMode::Theoretical => {
            let delta_k = cfg.delta / (kk * kk);
            let beta_bar = cfg.beta_constant * t.sqrt() * (4.0 * t / delta_k).ln();
            4.0 * t.sqrt() + 20.0 * (cfg.d as f64).sqrt() * upsilon(cfg.horizon, delta_k, cfg.d, beta_bar)
        }
    }
}

/// `b_T = (1 + ilog T)(M_{T,δ,ilog T} + 2√d) / T`.
pub fn margin_bt(cfg: &AdaptiveConfig) -> f64 {
    let k = cfg.max_regime();
    (1.0 + k as f64) * (regime_threshold(k, cfg) + 2.0 * (cfg.d as f64).sqrt()) / cfg.horizon as f64
}

/// Per-round state of the fixed-step strategy.
#[derive(Debug, Clone)]
pub struct PgdState {
    pub lambda: DualVector,
    pub t: usize,
    /// `Σ (c_lcb(x_τ, a_τ) − target)` since the last reset; the telescoping
    /// bound `‖(drift)_+‖ ≤ ‖λ_t‖ / γ` holds for it.
    pub lcb_drift: Vec<f64>,
}

impl PgdState {
    pub fn new(d: usize) -> Self {
        Self {
            lambda: DualVector::zeros(d),
            t: 0,
            lcb_drift: vec![0.0; d],
        }
    }

    fn step(&mut self, lcb_played: &[f64], target: &[f64], gamma: f64) {
        self.lambda = dual_update(&self.lambda, lcb_played, target, gamma);
        for ((s, c), b) in self.lcb_drift.iter_mut().zip(lcb_played).zip(target) {
            *s += c - b;
        }
        self.t += 1;
    }
}

/// Fixed step size strategy.
pub struct PgdStrategy {
    gamma: f64,
    target: Vec<f64>,
    num_actions: usize,
    state: PgdState,
    pending_lcb: Vec<f64>,
}

impl PgdStrategy {
    pub fn new(gamma: f64, target: Vec<f64>, num_actions: usize) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(invalid("step size must be positive"));
        }
        if num_actions == 0 {
            return Err(invalid("empty action set"));
        }
        let d = target.len();
        Ok(Self {
            gamma,
            target,
            num_actions,
            state: PgdState::new(d),
            pending_lcb: vec![0.0; d],
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn state(&self) -> &PgdState {
        &self.state
    }
}

impl Strategy for PgdStrategy {
    fn choose(&mut self, est: &dyn Estimator, x: &ContextVector, _rng: &mut dyn RngCore) -> ActionId {
        let (ucb, lcb) = optimistic_scores(est, x, self.num_actions);
        let a = select_action(&ucb, &lcb, &self.target, &self.state.lambda)
            .expect("action set checked at construction");
        self.pending_lcb.clone_from(&lcb[a.0]);
        a
    }

    fn observe(&mut self, _est: &dyn Estimator, _x: &ContextVector, _a: ActionId, _r: f64, _c: &[f64]) {
        self.state.step(&self.pending_lcb, &self.target, self.gamma);
    }

    fn lambda(&self) -> DualVector {
        self.state.lambda.clone()
    }
}

/// Regime bookkeeping of the adaptive strategy.
#[derive(Debug, Clone)]
pub struct RegimeState {
    pub k: u32,
    /// First round (1-based, counted in strategy rounds) of the current regime.
    pub start: usize,
    pub gamma: f64,
    pub threshold: f64,
    /// Realized costs summed since `start`.
    pub cost_sum: Vec<f64>,
    pub inner: PgdState,
}

/// Doubling-trick strategy with adaptive step size.
pub struct AdaptivePgdStrategy {
    cfg: AdaptiveConfig,
    target: Vec<f64>,
    num_actions: usize,
    regime: RegimeState,
    /// Strategy rounds elapsed.
    t: usize,
    /// `(round at which the regime started, k)` for every regime entered.
    history: Vec<(usize, u32)>,
    cap_hit: bool,
    pending_lcb: Vec<f64>,
}

impl AdaptivePgdStrategy {
    /// `target` is the budget after margin; pass `B − b·1` with
    /// `b = cfg.margin()` for the textbook convention.
    pub fn new(cfg: AdaptiveConfig, target: Vec<f64>, num_actions: usize) -> Result<Self> {
        cfg.validate()?;
        if target.len() != cfg.d {
            return Err(invalid("target dimension differs from configured d"));
        }
        if num_actions == 0 {
            return Err(invalid("empty action set"));
        }
        let regime = RegimeState {
            k: 0,
            start: 1,
            gamma: cfg.gamma(0),
            threshold: regime_threshold(0, &cfg),
            cost_sum: vec![0.0; cfg.d],
            inner: PgdState::new(cfg.d),
        };
        Ok(Self {
            target,
            num_actions,
            regime,
            t: 0,
            history: vec![(1, 0)],
            cap_hit: false,
            pending_lcb: vec![0.0; cfg.d],
            cfg,
        })
    }

    pub fn regime_state(&self) -> &RegimeState {
        &self.regime
    }

    pub fn history(&self) -> &[(usize, u32)] {
        &self.history
    }

    pub fn max_regime_reached(&self) -> u32 {
        self.regime.k
    }

    pub fn cap_hit(&self) -> bool {
        self.cap_hit
    }

    pub fn config(&self) -> &AdaptiveConfig {
        &self.cfg
    }

    fn next_regime(&mut self) {
        let k = self.regime.k + 1;
        if k > self.cfg.max_regime() {
            if !self.cap_hit {
                warn!(
                    "regime cap ilog T + 1 = {} reached at round {}; staying in regime {}",
                    self.cfg.max_regime() + 1,
                    self.t,
                    self.regime.k
                );
                self.cap_hit = true;
            }
            return;
        }
        self.regime = RegimeState {
            k,
            start: self.t + 1,
            gamma: self.cfg.gamma(k),
            threshold: regime_threshold(k, &self.cfg),
            cost_sum: vec![0.0; self.cfg.d],
            inner: PgdState::new(self.cfg.d),
        };
        self.history.push((self.t + 1, k));
    }
}

impl Strategy for AdaptivePgdStrategy {
    fn choose(&mut self, est: &dyn Estimator, x: &ContextVector, _rng: &mut dyn RngCore) -> ActionId {
        let (ucb, lcb) = optimistic_scores(est, x, self.num_actions);
        let a = select_action(&ucb, &lcb, &self.target, &self.regime.inner.lambda)
            .expect("action set checked at construction");
        self.pending_lcb.clone_from(&lcb[a.0]);
        a
    }

    fn observe(&mut self, _est: &dyn Estimator, _x: &ContextVector, _a: ActionId, _r: f64, c: &[f64]) {
        self.t += 1;
        let gamma = self.regime.gamma;
        self.regime.inner.step(&self.pending_lcb, &self.target, gamma);
        for (s, v) in self.regime.cost_sum.iter_mut().zip(c) {
            *s += v;
        }
        let n = (self.t + 1 - self.regime.start) as f64;
        let excess = positive_part_norm(&self.regime.cost_sum, &self.target, n);
        if excess > self.regime.threshold && !self.cap_hit {
            self.next_regime();
        }
    }

    fn lambda(&self) -> DualVector {
        self.regime.inner.lambda.clone()
    }

    fn regime(&self) -> usize {
        self.regime.k as usize
    }
}

/// Score of a single action, exposed for tests of argmax invariances.
pub fn lagrangian_score(ucb: f64, lcb: &[f64], target: &[f64], lambda: &DualVector) -> f64 {
    let diff: Vec<f64> = lcb.iter().zip(target).map(|(c, b)| c - b).collect();
    ucb - dot(&diff, lambda.as_slice())
}
