use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EnvSpec, EstimatorSpec, ExperimentConfig, StrategySpec};
use crate::dual_strategy::{margin_bt, AdaptiveConfig, AdaptivePgdStrategy, MarginMode, PgdStrategy};
use crate::error::{CbwkError, Result};
use crate::estimators::{
    EnvironmentCosts, Estimator, LinearUcbConfig, LinearUcbEstimator, LogisticUcbConfig,
    LogisticUcbEstimator, OracleEstimator, PerActionLinearFeatures, TabularFeatures,
};
use crate::fairness::{court_fairness_metric, CourtEnvironment, CourtFeatureMap, COURT_COST_DIM};
use crate::finite::{FiniteEnvironment, FiniteInstance};
use crate::oracles::{brute_force_opt, estimate_opt, DualMinConfig, MixedPolicy};
use crate::primal::{EmpiricalContextDistribution, PrimalStrategy, SlackSchedule};
use crate::problem::{
    ActionId, ContextVector, DualVector, Environment, PolicyDistribution, RoundRecord, Trajectory,
};
use crate::strategy::Strategy;

/// Seed offset for the one-off multiplier estimation of fixed-λ strategies,
/// kept away from the run seeds.
const OPT_SEED_OFFSET: u64 = 1 << 40;

/// A validated configuration with everything shared by its runs.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub env: Arc<dyn Environment>,
    pub budget: Vec<f64>,
    /// Budget after margin, used by the dual strategies.
    pub target: Vec<f64>,
    pub margin: f64,
    pub is_court: bool,
    fixed_lambda: Option<DualVector>,
    static_policies: Option<Vec<PolicyDistribution>>,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let (env, budget, is_court): (Arc<dyn Environment>, Vec<f64>, bool) = match &cfg.env {
            EnvSpec::Court { tau, convention } => {
                let env = CourtEnvironment::new(*tau)?.with_convention(*convention);
                let b = env.budget().as_slice().to_vec();
                (Arc::new(env), b, true)
            }
            EnvSpec::Finite { instance } => {
                let b = instance.budget.clone();
                (Arc::new(FiniteEnvironment::new(instance.clone())?), b, false)
            }
            EnvSpec::FiniteFile { path } => {
                let text = std::fs::read_to_string(path).map_err(|source| CbwkError::Io {
                    path: path.clone(),
                    source,
                })?;
                let inst: FiniteInstance = if path.extension().is_some_and(|e| e == "json") {
                    serde_json::from_str(&text).map_err(|source| CbwkError::Json {
                        path: path.clone(),
                        source,
                    })?
                } else {
                    toml::from_str(&text).map_err(|e| CbwkError::Config(format!("{}: {e}", path.display())))?
                };
                let b = inst.budget.clone();
                (Arc::new(FiniteEnvironment::new(inst)?), b, false)
            }
        };
        let margin = if cfg.margin.auto_bt {
            match adaptive_config(&cfg, env.cost_dim()) {
                Some(a) => margin_bt(&a),
                None => return Err(CbwkError::Config("margin.auto_bt needs the pgd_adaptive strategy".into())),
            }
        } else {
            cfg.margin.b
        };
        let target = cfg.margin.apply(&budget, margin);
        let mut exp = Self {
            cfg,
            env,
            budget,
            target,
            margin,
            is_court,
            fixed_lambda: None,
            static_policies: None,
        };
        exp.prepare()?;
        Ok(exp)
    }

    fn prepare(&mut self) -> Result<()> {
        let seed = self.cfg.run.base_seed.wrapping_add(OPT_SEED_OFFSET);
        match &self.cfg.strategy {
            StrategySpec::Mixed {
                lambda_star,
                samples,
                reps,
            } => {
                let lam = match lambda_star {
                    Some(l) => {
                        if l.len() != self.target.len() {
                            return Err(CbwkError::Config("strategy.lambda_star has the wrong length".into()));
                        }
                        DualVector::new(l.clone())?
                    }
                    None => self.reference_lambda(*samples, *reps, seed)?,
                };
                self.fixed_lambda = Some(lam);
            }
            StrategySpec::OracleStatic { samples, reps } => {
                if let Some((xs, w)) = self.env.finite_support() {
                    let (r, c) = tabulate(self.env.as_ref(), &xs);
                    self.static_policies = Some(brute_force_opt(&w, &r, &c, &self.target)?.policies);
                } else {
                    self.fixed_lambda = Some(self.reference_lambda(*samples, *reps, seed)?);
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// `λ*` for the margin budget, exact on finite instances.
    fn reference_lambda(&self, samples: usize, reps: usize, seed: u64) -> Result<DualVector> {
        if let Some((xs, w)) = self.env.finite_support() {
            let (r, c) = tabulate(self.env.as_ref(), &xs);
            return Ok(brute_force_opt(&w, &r, &c, &self.target)?.lambda_star);
        }
        Ok(estimate_opt(self.env.as_ref(), &self.target, samples, reps, seed, &DualMinConfig::default())?.lambda_star)
    }

    pub fn fixed_lambda(&self) -> Option<&DualVector> {
        self.fixed_lambda.as_ref()
    }

    pub fn build_estimator(&self) -> Result<Box<dyn Estimator>> {
        let d = self.env.cost_dim();
        let na = self.env.num_actions();
        Ok(match &self.cfg.estimator {
            EstimatorSpec::Logistic {
                c_delta,
                lambda_reg,
                refit_every_round_until,
                refit_interval,
            } => Box::new(LogisticUcbEstimator::new(
                Arc::new(CourtFeatureMap),
                Arc::new(EnvironmentCosts(self.env.clone())),
                LogisticUcbConfig {
                    c_delta: *c_delta,
                    lambda_reg: *lambda_reg,
                    refit_every_round_until: *refit_every_round_until,
                    refit_interval: (*refit_interval).max(1),
                    ..LogisticUcbConfig::default()
                },
            )?),
            EstimatorSpec::Linear { c_delta, lambda_reg } => {
                let cfg = LinearUcbConfig {
                    c_delta: *c_delta,
                    lambda_reg: *lambda_reg,
                    ..LinearUcbConfig::default()
                };
                match self.env.finite_support() {
                    Some((xs, _)) => Box::new(LinearUcbEstimator::new(
                        Arc::new(TabularFeatures::new(xs.len(), na)),
                        d,
                        cfg,
                    )?),
                    None => Box::new(LinearUcbEstimator::new(
                        Arc::new(PerActionLinearFeatures::new(3, na)),
                        d,
                        cfg,
                    )?),
                }
            }
            EstimatorSpec::Oracle => Box::new(OracleEstimator::new(self.env.clone())),
        })
    }

    pub fn build_strategy(&self) -> Result<Box<dyn Strategy>> {
        let na = self.env.num_actions();
        let d = self.env.cost_dim();
        Ok(match &self.cfg.strategy {
            StrategySpec::PgdFixed { gamma } => Box::new(PgdStrategy::new(*gamma, self.target.clone(), na)?),
            StrategySpec::PgdAdaptive { .. } => {
                let a = adaptive_config(&self.cfg, d).expect("adaptive strategy");
                Box::new(AdaptivePgdStrategy::new(a, self.target.clone(), na)?)
            }
            StrategySpec::Primal {
                slack,
                beta,
                exact_nu,
                xi_constant,
            } => {
                let (support, weights) = self
                    .env
                    .finite_support()
                    .ok_or_else(|| CbwkError::Config("the primal strategy needs a finite context set".into()))?;
                let nu = if *exact_nu {
                    EmpiricalContextDistribution::known(weights)
                } else {
                    EmpiricalContextDistribution::new(support.len()).with_xi_constant(*xi_constant)
                };
                let schedule = SlackSchedule::new(*slack, self.cfg.run.horizon, self.cfg.run.delta, d, &nu, *beta)?;
                Box::new(PrimalStrategy::new(
                    support,
                    nu,
                    schedule,
                    self.budget.clone(),
                    na,
                    self.env.null_action(),
                )?)
            }
            StrategySpec::Mixed { .. } => Box::new(MixedPolicy::new(
                self.fixed_lambda.clone().expect("prepared"),
                self.target.clone(),
                na,
            )?),
            StrategySpec::OracleStatic { .. } => match &self.static_policies {
                Some(p) => Box::new(TabularPolicy {
                    policies: p.clone(),
                    d,
                }),
                None => Box::new(OraclePolicy {
                    inner: MixedPolicy::new(self.fixed_lambda.clone().expect("prepared"), self.target.clone(), na)?,
                    oracle: OracleEstimator::new(self.env.clone()),
                }),
            },
        })
    }

    /// Names of the series metrics: reward first, then costs.
    pub fn metric_names(&self) -> Vec<String> {
        if self.is_court {
            ["avg_reward", "ride_cost", "voucher_cost", "fairness"]
                .iter()
                .map(|s| s.to_string())
                .collect()
        } else {
            std::iter::once("avg_reward".to_string())
                .chain((0..self.env.cost_dim()).map(|i| format!("cost_{i}")))
                .collect()
        }
    }

    /// Metric values for running averages of reward and costs.
    pub fn metrics(&self, avg_reward: f64, avg_cost: &[f64]) -> Vec<f64> {
        if self.is_court {
            debug_assert_eq!(avg_cost.len(), COURT_COST_DIM);
            vec![avg_reward, avg_cost[0], avg_cost[1], court_fairness_metric(avg_cost)]
        } else {
            std::iter::once(avg_reward).chain(avg_cost.iter().copied()).collect()
        }
    }
}

fn adaptive_config(cfg: &ExperimentConfig, d: usize) -> Option<AdaptiveConfig> {
    match &cfg.strategy {
        StrategySpec::PgdAdaptive {
            threshold_mode,
            c,
            beta_constant,
        } => Some(AdaptiveConfig {
            delta: cfg.run.delta,
            horizon: cfg.run.horizon,
            d,
            threshold_mode: *threshold_mode,
            practical_c: *c,
            beta_constant: *beta_constant,
            margin_mode: if cfg.margin.auto_bt {
                MarginMode::AutoBt
            } else {
                MarginMode::Fixed(cfg.margin.b)
            },
        }),
        _ => None,
    }
}

fn tabulate(env: &dyn Environment, xs: &[ContextVector]) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let na = env.num_actions();
    let r = xs
        .iter()
        .map(|x| (0..na).map(|a| env.expected_reward(x, ActionId(a))).collect())
        .collect();
    let c = xs
        .iter()
        .map(|x| (0..na).map(|a| env.expected_cost(x, ActionId(a))).collect())
        .collect();
    (r, c)
}

/// Plays fixed per-context distributions over a finite support.
struct TabularPolicy {
    policies: Vec<PolicyDistribution>,
    d: usize,
}

impl Strategy for TabularPolicy {
    fn choose(&mut self, _est: &dyn Estimator, x: &ContextVector, rng: &mut dyn RngCore) -> ActionId {
        let i = x.support_index.expect("finite support");
        self.policies[i].sample(rng)
    }

    fn observe(&mut self, _est: &dyn Estimator, _x: &ContextVector, _a: ActionId, _r: f64, _c: &[f64]) {}

    fn lambda(&self) -> DualVector {
        DualVector::zeros(self.d)
    }
}

/// Lagrangian policy evaluated on the true model.
struct OraclePolicy {
    inner: MixedPolicy,
    oracle: OracleEstimator,
}

impl Strategy for OraclePolicy {
    fn choose(&mut self, _est: &dyn Estimator, x: &ContextVector, rng: &mut dyn RngCore) -> ActionId {
        self.inner.choose(&self.oracle, x, rng)
    }

    fn observe(&mut self, _est: &dyn Estimator, _x: &ContextVector, _a: ActionId, _r: f64, _c: &[f64]) {}

    fn lambda(&self) -> DualVector {
        self.inner.lambda()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub trajectory: Trajectory,
    pub final_regime: usize,
    pub fallbacks: usize,
    pub beta: f64,
}

/// One seeded run. Per round the generator is consumed in the order context,
/// action (when randomized), reward, cost.
pub fn run_single(exp: &Experiment, seed: u64) -> Result<RunOutput> {
    let run = &exp.cfg.run;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut est = exp.build_estimator()?;
    let mut strategy = exp.build_strategy()?;
    let env = exp.env.as_ref();
    let na = env.num_actions();
    let d = env.cost_dim();
    let uniform = PolicyDistribution::uniform(na);
    let mut traj = Trajectory::with_capacity(d, run.horizon);

    for t in 1..=run.horizon {
        let x = env.sample_context(&mut rng);
        let lambda_before = strategy.lambda();
        let warm = t <= run.warmup;
        let a = if warm {
            uniform.sample(&mut rng)
        } else {
            strategy.choose(est.as_ref(), &x, &mut rng)
        };
        let r = env.sample_reward(&x, a, &mut rng);
        let c = env.sample_cost(&x, a, &mut rng);
        if !warm {
            strategy.observe(est.as_ref(), &x, a, r, &c);
        }
        est.update(&x, a, r, &c)?;
        traj.push(RoundRecord {
            t,
            x,
            a,
            r,
            c,
            lambda_before,
            regime: strategy.regime(),
        });
    }
    Ok(RunOutput {
        seed,
        trajectory: traj,
        final_regime: strategy.regime(),
        fallbacks: strategy.fallback_count(),
        beta: est.beta(),
    })
}

/// Per-run figures kept after the trajectory is reduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    /// Averages over the reported window at the final round.
    pub avg_reward: f64,
    pub avg_cost: Vec<f64>,
    /// Sums over every round, warm-up included.
    pub cum_reward: f64,
    pub cum_cost: Vec<f64>,
    pub final_regime: usize,
    pub fallbacks: usize,
    pub beta: f64,
}

/// Running-average metrics of one run, one row per reported round.
pub fn run_series(exp: &Experiment, traj: &Trajectory) -> (Vec<usize>, Vec<Vec<f64>>) {
    let start = if exp.cfg.run.include_warmup { 0 } else { exp.cfg.run.warmup };
    let d = exp.env.cost_dim();
    let mut sum_r = 0.0;
    let mut sum_c = vec![0.0; d];
    let mut ts = Vec::with_capacity(traj.len().saturating_sub(start));
    let mut rows = Vec::with_capacity(traj.len().saturating_sub(start));
    let mut avg = vec![0.0; d];
    for (i, rec) in traj.records().iter().enumerate().skip(start) {
        sum_r += rec.r;
        for (s, c) in sum_c.iter_mut().zip(&rec.c) {
            *s += c;
        }
        let n = (i + 1 - start) as f64;
        for (a, s) in avg.iter_mut().zip(&sum_c) {
            *a = s / n;
        }
        ts.push(rec.t);
        rows.push(exp.metrics(sum_r / n, &avg));
    }
    (ts, rows)
}

fn summarize(exp: &Experiment, out: &RunOutput) -> RunSummary {
    let start = if exp.cfg.run.include_warmup { 0 } else { exp.cfg.run.warmup };
    let recs = &out.trajectory.records()[start..];
    let n = recs.len().max(1) as f64;
    let d = exp.env.cost_dim();
    let mut avg_cost = vec![0.0; d];
    let mut avg_reward = 0.0;
    for rec in recs {
        avg_reward += rec.r;
        for (a, c) in avg_cost.iter_mut().zip(&rec.c) {
            *a += c;
        }
    }
    avg_cost.iter_mut().for_each(|a| *a /= n);
    RunSummary {
        seed: out.seed,
        avg_reward: avg_reward / n,
        avg_cost,
        cum_reward: out.trajectory.cum_reward(),
        cum_cost: out.trajectory.cum_cost().to_vec(),
        final_regime: out.final_regime,
        fallbacks: out.fallbacks,
        beta: out.beta,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSeries {
    pub metrics: Vec<String>,
    pub t: Vec<usize>,
    /// `mean[row][metric]`
    pub mean: Vec<Vec<f64>>,
    /// Standard error of the mean across runs.
    pub se: Vec<Vec<f64>>,
}

impl AggregateSeries {
    /// Mean and standard error across runs, reduced in the given run order.
    pub fn from_runs(metrics: Vec<String>, t: Vec<usize>, runs: &[Vec<Vec<f64>>]) -> Self {
        let n = runs.len() as f64;
        let m = metrics.len();
        let mut mean = Vec::with_capacity(t.len());
        let mut se = Vec::with_capacity(t.len());
        for row in 0..t.len() {
            let mut mu = vec![0.0; m];
            for run in runs {
                for (a, v) in mu.iter_mut().zip(&run[row]) {
                    *a += v;
                }
            }
            mu.iter_mut().for_each(|a| *a /= n);
            let mut s = vec![0.0; m];
            if runs.len() > 1 {
                for run in runs {
                    for ((a, v), mu) in s.iter_mut().zip(&run[row]).zip(&mu) {
                        *a += (v - mu).powi(2);
                    }
                }
                s.iter_mut().for_each(|a| *a = (*a / (n - 1.0) / n).sqrt());
            }
            mean.push(mu);
            se.push(s);
        }
        Self { metrics, t, mean, se }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub two_se: f64,
}

impl Stat {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let two_se = if values.len() > 1 {
            2.0 * (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Self { mean, two_se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub horizon: usize,
    pub warmup: usize,
    pub include_warmup: bool,
    pub runs: usize,
    pub reward: Stat,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ride: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub voucher: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fairness: Option<Stat>,
    /// Every cost component.
    pub costs: Vec<Stat>,
    pub final_regimes: Vec<usize>,
    pub fallbacks: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub series: AggregateSeries,
    pub summary: SummaryRow,
    pub runs: Vec<RunSummary>,
}

fn summary_row(exp: &Experiment, runs: &[RunSummary]) -> SummaryRow {
    let d = exp.env.cost_dim();
    let rewards: Vec<f64> = runs.iter().map(|r| r.avg_reward).collect();
    let costs: Vec<Stat> = (0..d)
        .map(|i| Stat::from_values(&runs.iter().map(|r| r.avg_cost[i]).collect::<Vec<_>>()))
        .collect();
    let (ride, voucher, fairness) = if exp.is_court {
        let fair: Vec<f64> = runs.iter().map(|r| court_fairness_metric(&r.avg_cost)).collect();
        (Some(costs[0]), Some(costs[1]), Some(Stat::from_values(&fair)))
    } else {
        (None, None, None)
    };
    SummaryRow {
        label: exp.cfg.label(),
        horizon: exp.cfg.run.horizon,
        warmup: exp.cfg.run.warmup,
        include_warmup: exp.cfg.run.include_warmup,
        runs: runs.len(),
        reward: Stat::from_values(&rewards),
        ride,
        voucher,
        fairness,
        costs,
        final_regimes: runs.iter().map(|r| r.final_regime).collect(),
        fallbacks: runs.iter().map(|r| r.fallbacks).collect(),
    }
}

/// `seeds` runs with seeds `base, base + 1, ...`, run in parallel and reduced
/// in seed order.
pub fn run_batch(exp: &Experiment) -> Result<BatchResult> {
    let run = &exp.cfg.run;
    let seeds: Vec<u64> = (0..run.seeds as u64).map(|i| run.base_seed.wrapping_add(i)).collect();
    let outputs: Vec<(Vec<usize>, Vec<Vec<f64>>, RunSummary)> = seeds
        .par_iter()
        .map(|&s| {
            let out = run_single(exp, s)?;
            let (t, rows) = run_series(exp, &out.trajectory);
            Ok((t, rows, summarize(exp, &out)))
        })
        .collect::<Result<_>>()?;
    let t = outputs.first().map(|o| o.0.clone()).unwrap_or_default();
    let mut series_runs = Vec::with_capacity(outputs.len());
    let mut summaries = Vec::with_capacity(outputs.len());
    for (_, rows, s) in outputs {
        series_runs.push(rows);
        summaries.push(s);
    }
    let series = AggregateSeries::from_runs(exp.metric_names(), t, &series_runs);
    let summary = summary_row(exp, &summaries);
    Ok(BatchResult {
        series,
        summary,
        runs: summaries,
    })
}
