//! Fast invariant suite behind the `selftest` subcommand.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dual_strategy::{dual_update, ilog, AdaptiveConfig, AdaptivePgdStrategy};
use crate::error::Result;
use crate::estimators::{Estimator, LinearUcbConfig, LinearUcbEstimator, TabularFeatures};
use crate::fairness::{court_cost, CourtEnvironment};
use crate::finite::{FiniteEnvironment, FiniteInstance};
use crate::harness::{run_batch, write_csv, Experiment, ExperimentConfig};
use crate::oracles::{brute_force_instance, minimize_dual, DualMinConfig, DualSample};
use crate::problem::{norm2, ActionId, DualVector, Environment};
use crate::strategy::Strategy;
use std::sync::Arc;

/// Ten-round toy experiment whose CSV output is pinned byte for byte.
pub const TOY_CONFIG: &str = r#"
[env]
kind = "finite"

[env.instance]
weights = [0.5, 0.5]
rewards = [[0.2, 0.8], [0.5, 0.3]]
costs = [[[0.0], [0.6]], [[0.0], [0.4]]]
budget = [0.3]
null_action = 0

[strategy]
kind = "pgd_fixed"
gamma = 0.5

[run]
horizon = 10
warmup = 2
seeds = 2
base_seed = 11

[margin]
convention = "uniform"
b = 0.05

[estimator]
kind = "linear"
c_delta = 0.5
lambda_reg = 1.0
"#;

pub const TOY_GOLDEN: &str = include_str!("../tests/golden/toy_series.csv");

/// CSV text of the toy experiment.
pub fn toy_csv() -> Result<String> {
    let exp = Experiment::new(ExperimentConfig::from_toml_str(TOY_CONFIG)?)?;
    let batch = run_batch(&exp)?;
    let mut buf = Vec::new();
    write_csv(&batch.series, &mut buf).map_err(|e| crate::error::CbwkError::Config(e.to_string()))?;
    Ok(String::from_utf8(buf).expect("utf-8 CSV"))
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> std::result::Result<String, String>) -> CheckResult {
    match f() {
        Ok(detail) => CheckResult {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckResult {
            name,
            passed: false,
            detail,
        },
    }
}

fn random_lambda(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DualVector {
    DualVector::project((0..d).map(|_| scale * rng.random::<f64>()).collect())
}

pub fn run_selftest() -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();

    out.push(check("dual nonnegativity", || {
        for _ in 0..200 {
            let d = rng.random_range(1..6);
            let mut lam = DualVector::zeros(d);
            for _ in 0..200 {
                let lcb: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let target: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                lam = dual_update(&lam, &lcb, &target, rng.random_range(0.001..2.0));
                if lam.as_slice().iter().any(|v| *v < 0.0) {
                    return Err(format!("negative multiplier {lam:?}"));
                }
            }
        }
        Ok("40000 updates".into())
    }));

    out.push(check("projection is 1-Lipschitz", || {
        for _ in 0..2000 {
            let d = rng.random_range(1..6);
            let l1 = random_lambda(&mut rng, d, 3.0);
            let l2 = random_lambda(&mut rng, d, 3.0);
            let lcb: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let target: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let g = rng.random_range(0.001..2.0);
            let u1 = dual_update(&l1, &lcb, &target, g);
            let u2 = dual_update(&l2, &lcb, &target, g);
            let diff = |a: &DualVector, b: &DualVector| {
                norm2(&a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - y).collect::<Vec<_>>())
            };
            if diff(&u1, &u2) > diff(&l1, &l2) + 1e-12 {
                return Err("projection expanded a distance".into());
            }
        }
        Ok("2000 pairs".into())
    }));

    out.push(check("clipping ranges", || {
        let inst = FiniteInstance::random(&mut rng, 3, 3, 2, false);
        let env = FiniteEnvironment::new(inst).map_err(|e| e.to_string())?;
        let mut est = LinearUcbEstimator::new(
            Arc::new(TabularFeatures::new(3, 3)),
            2,
            LinearUcbConfig {
                c_delta: 2.0,
                ..LinearUcbConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;
        for _ in 0..500 {
            let x = env.sample_context(&mut rng);
            for a in 0..3 {
                let u = est.reward_ucb(&x, ActionId(a));
                let l = est.cost_lcb(&x, ActionId(a));
                if !(0.0..=1.0).contains(&u) || l.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                    return Err(format!("out of range: {u} {l:?}"));
                }
            }
            let a = ActionId(rng.random_range(0..3));
            let r = env.sample_reward(&x, a, &mut rng);
            let c = env.sample_cost(&x, a, &mut rng);
            est.update(&x, a, r, &c).map_err(|e| e.to_string())?;
        }
        Ok("500 rounds".into())
    }));

    out.push(check("step size doubling and regime cap", || {
        // a tiny threshold forces a break almost every round
        let inst = FiniteInstance {
            weights: vec![1.0],
            rewards: vec![vec![0.1, 0.9]],
            costs: vec![vec![vec![0.0], vec![1.0]]],
            budget: vec![0.1],
            null_action: Some(0),
        };
        let env = Arc::new(FiniteEnvironment::new(inst).map_err(|e| e.to_string())?);
        let horizon = 1000;
        let cfg = AdaptiveConfig::practical(horizon, 1, 0.05, 1e-4, 0.0);
        let mut strat = AdaptivePgdStrategy::new(cfg, vec![0.1], 2).map_err(|e| e.to_string())?;
        let est = crate::estimators::OracleEstimator::new(env.clone());
        let mut prev_k = 0;
        let mut prev_gamma = strat.regime_state().gamma;
        for _ in 0..horizon {
            let x = env.sample_context(&mut rng);
            let a = strat.choose(&est, &x, &mut rng);
            let c = env.sample_cost(&x, a, &mut rng);
            strat.observe(&est, &x, a, 0.0, &c);
            let st = strat.regime_state();
            if st.k != prev_k {
                if st.gamma != 2.0 * prev_gamma || st.k != prev_k + 1 {
                    return Err(format!("regime {} has step {}", st.k, st.gamma));
                }
                if !st.inner.lambda.is_zero() || st.inner.t != 0 {
                    return Err("multipliers not reset".into());
                }
                prev_k = st.k;
                prev_gamma = st.gamma;
            }
        }
        let cap = ilog(horizon as f64).map_err(|e| e.to_string())?;
        if strat.max_regime_reached() > cap || strat.history().len() > cap as usize + 1 {
            return Err(format!("regime {} beyond ilog T = {cap}", strat.max_regime_reached()));
        }
        if !strat.cap_hit() {
            return Err("cap was expected to bind".into());
        }
        Ok(format!("{} regimes, cap ilog T + 1 = {}", strat.history().len(), cap + 1))
    }));

    out.push(check("fairness antisymmetry", || {
        let env = CourtEnvironment::new(0.025).map_err(|e| e.to_string())?;
        for _ in 0..5000 {
            let x = env.sample_context(&mut rng);
            for a in 0..3 {
                let c = court_cost(&x, ActionId(a));
                for i in 0..4 {
                    if c[2 + i] != -c[6 + i] {
                        return Err(format!("components {} and {} differ in sign", 2 + i, 6 + i));
                    }
                }
            }
        }
        Ok("15000 pairs".into())
    }));

    out.push(check("subgradient inequality", || {
        let mut worst = f64::INFINITY;
        for _ in 0..100 {
            let d = rng.random_range(1..4);
            let (nx, na) = (rng.random_range(1..6), rng.random_range(1..5));
            let inst = FiniteInstance::random(&mut rng, nx, na, d, false);
            let s = DualSample::from_instance(&inst).map_err(|e| e.to_string())?;
            let l = random_lambda(&mut rng, d, 3.0);
            let (g0, grad) = s.value_and_subgradient(l.as_slice());
            for _ in 0..10 {
                let l2 = random_lambda(&mut rng, d, 3.0);
                let g1 = s.value_and_subgradient(l2.as_slice()).0;
                let lin: f64 = grad.iter().zip(l2.as_slice()).zip(l.as_slice()).map(|((g, a), b)| g * (a - b)).sum();
                worst = worst.min(g1 - g0 - lin);
            }
        }
        if worst < -1e-9 {
            Err(format!("slack {worst:e}"))
        } else {
            Ok(format!("min slack {worst:.3e}"))
        }
    }));

    out.push(check("dual and primal optima agree", || {
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let d = rng.random_range(1..4);
            let (nx, na) = (rng.random_range(1..6), rng.random_range(2..5));
            let inst = FiniteInstance::random(&mut rng, nx, na, d, true);
            let exact = brute_force_instance(&inst, &inst.budget).map_err(|e| e.to_string())?;
            let s = DualSample::from_instance(&inst).map_err(|e| e.to_string())?;
            let dual = minimize_dual(&s, &DualMinConfig::default()).map_err(|e| e.to_string())?;
            worst = worst.max((dual.value - exact.value).abs());
        }
        if worst > 1e-4 {
            Err(format!("gap {worst:e}"))
        } else {
            Ok(format!("max gap {worst:.2e}"))
        }
    }));

    out.push(check("CSV golden file", || {
        let csv = toy_csv().map_err(|e| e.to_string())?;
        if csv == TOY_GOLDEN {
            Ok(format!("{} rows", csv.lines().count() - 1))
        } else {
            Err("toy run output differs from the golden file".into())
        }
    }));

    out
}

/// Runs the suite and prints one line per check; returns whether all passed.
pub fn run_and_report() -> bool {
    let start = Instant::now();
    let results = run_selftest();
    let mut ok = true;
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        ok &= r.passed;
    }
    println!("selftest finished in {:.1}s", start.elapsed().as_secs_f64());
    ok
}
