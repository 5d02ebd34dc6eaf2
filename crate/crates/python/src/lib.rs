//! Python bindings: the court environment, the OPT oracles, the regime
//! constants and whole experiments driven by a TOML config.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cbwk::dual_strategy::{self, AdaptiveConfig, MarginMode, ThresholdMode};
use cbwk::fairness::{self, CourtEnvironment, SigmoidConvention};
use cbwk::finite::FiniteInstance;
use cbwk::harness::{run_batch, Experiment, ExperimentConfig};
use cbwk::oracles::{self, DualMinConfig, DualSample};
use cbwk::{ActionId, CbwkError, ContextVector, Environment};

fn err(e: CbwkError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_instance(json: &str) -> PyResult<FiniteInstance> {
    let inst: FiniteInstance = serde_json::from_str(json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    inst.validate().map_err(err)?;
    Ok(inst)
}

fn court_context(age: f64, prox: f64, pov: f64, group: usize, action: usize) -> PyResult<ContextVector> {
    if [age, prox, pov].iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(PyValueError::new_err("context coordinates must lie in [0, 1]"));
    }
    if group > 1 || action >= fairness::COURT_NUM_ACTIONS {
        return Err(PyValueError::new_err("group must be 0 or 1 and action 0, 1 or 2"));
    }
    Ok(CourtEnvironment::context(age, prox, pov, group))
}

#[pyclass(name = "CourtEnvironment", frozen)]
struct PyCourtEnvironment {
    inner: CourtEnvironment,
}

#[pymethods]
impl PyCourtEnvironment {
    #[new]
    #[pyo3(signature = (tau, flipped_sigmoid=false))]
    fn new(tau: f64, flipped_sigmoid: bool) -> PyResult<Self> {
        let convention = if flipped_sigmoid {
            SigmoidConvention::Flipped
        } else {
            SigmoidConvention::Standard
        };
        let inner = CourtEnvironment::new(tau).map_err(err)?.with_convention(convention);
        Ok(Self { inner })
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    fn budget(&self) -> Vec<f64> {
        self.inner.budget().as_slice().to_vec()
    }

    /// Budget with `b` removed from the ride and voucher components.
    fn margin_budget(&self, b: f64) -> Vec<f64> {
        self.inner.margin_budget(b)
    }

    fn expected_reward(&self, age: f64, prox: f64, pov: f64, group: usize, action: usize) -> PyResult<f64> {
        let x = court_context(age, prox, pov, group, action)?;
        Ok(fairness::court_expected_reward(&x, ActionId(action), self.inner.convention))
    }

    fn cost(&self, age: f64, prox: f64, pov: f64, group: usize, action: usize) -> PyResult<Vec<f64>> {
        let x = court_context(age, prox, pov, group, action)?;
        Ok(fairness::court_cost(&x, ActionId(action)))
    }

    /// `n` contexts as `(age, prox, pov, group)` tuples.
    fn sample_contexts(&self, n: usize, seed: u64) -> Vec<(f64, f64, f64, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x: ContextVector = self.inner.sample_context(&mut rng);
                (x.coords[0], x.coords[1], x.coords[2], x.group.unwrap_or(0))
            })
            .collect()
    }

    #[pyo3(signature = (samples, reps, seed=0, margin=0.0, iters=5000))]
    fn estimate_opt<'py>(
        &self,
        py: Python<'py>,
        samples: usize,
        reps: usize,
        seed: u64,
        margin: f64,
        iters: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let budget = self.inner.margin_budget(margin);
        let cfg = DualMinConfig {
            iters,
            ..DualMinConfig::default()
        };
        let est = oracles::estimate_opt(&self.inner, &budget, samples, reps, seed, &cfg).map_err(err)?;
        let out = PyDict::new(py);
        out.set_item("value", est.value)?;
        out.set_item("stderr", est.stderr)?;
        out.set_item("lambda_star", est.lambda_star.as_slice().to_vec())?;
        out.set_item("values", est.values)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!("CourtEnvironment(tau={})", self.inner.tau)
    }
}

/// Exact OPT and multipliers of a finite instance given as JSON.
#[pyfunction]
#[pyo3(signature = (instance_json, budget=None))]
fn brute_force_opt(instance_json: &str, budget: Option<Vec<f64>>) -> PyResult<(f64, Vec<f64>)> {
    let inst = parse_instance(instance_json)?;
    let b = budget.unwrap_or_else(|| inst.budget.clone());
    let exact = oracles::brute_force_instance(&inst, &b).map_err(err)?;
    Ok((exact.value, exact.lambda_star.as_slice().to_vec()))
}

/// Dual minimization on a finite instance given as JSON.
#[pyfunction]
#[pyo3(signature = (instance_json, iters=5000))]
fn minimize_dual(instance_json: &str, iters: usize) -> PyResult<(f64, Vec<f64>, bool)> {
    let inst = parse_instance(instance_json)?;
    let sample = DualSample::from_instance(&inst).map_err(err)?;
    let cfg = DualMinConfig {
        iters,
        ..DualMinConfig::default()
    };
    let res = oracles::minimize_dual(&sample, &cfg).map_err(err)?;
    Ok((res.value, res.lambda.as_slice().to_vec(), res.converged))
}

#[pyfunction]
fn ilog(x: f64) -> PyResult<u32> {
    dual_strategy::ilog(x).map_err(err)
}

#[pyfunction]
fn upsilon(horizon: usize, delta: f64, d: usize, beta: f64) -> f64 {
    dual_strategy::upsilon(horizon, delta, d, beta)
}

fn adaptive_config(horizon: usize, d: usize, delta: f64, mode: &str, c: f64, beta_constant: f64) -> PyResult<AdaptiveConfig> {
    let threshold_mode = match mode {
        "practical" => ThresholdMode::Practical,
        "theoretical" => ThresholdMode::Theoretical,
        other => return Err(PyValueError::new_err(format!("unknown threshold mode {other:?}"))),
    };
    let cfg = AdaptiveConfig {
        delta,
        horizon,
        d,
        threshold_mode,
        practical_c: c,
        beta_constant,
        margin_mode: MarginMode::AutoBt,
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// Threshold `M_k` ending regime `k`.
#[pyfunction]
#[pyo3(signature = (k, horizon, d, delta=0.05, mode="practical", c=0.01, beta_constant=1.0))]
fn regime_threshold(k: u32, horizon: usize, d: usize, delta: f64, mode: &str, c: f64, beta_constant: f64) -> PyResult<f64> {
    let cfg = adaptive_config(horizon, d, delta, mode, c, beta_constant)?;
    Ok(dual_strategy::regime_threshold(k, &cfg))
}

/// Margin `b_T` of the adaptive strategy.
#[pyfunction]
#[pyo3(signature = (horizon, d, delta=0.05, mode="theoretical", c=0.01, beta_constant=1.0))]
fn margin_bt(horizon: usize, d: usize, delta: f64, mode: &str, c: f64, beta_constant: f64) -> PyResult<f64> {
    let cfg = adaptive_config(horizon, d, delta, mode, c, beta_constant)?;
    Ok(dual_strategy::margin_bt(&cfg))
}

/// Runs the experiment described by a TOML config and returns the aggregated
/// series plus the final-round summary as a JSON string.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config_toml: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ExperimentConfig::from_toml_str(config_toml).map_err(err)?;
    let batch = py
        .detach(|| Experiment::new(cfg).and_then(|exp| run_batch(&exp)))
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("metrics", batch.series.metrics.clone())?;
    out.set_item("t", batch.series.t.clone())?;
    out.set_item("mean", batch.series.mean.clone())?;
    out.set_item("se", batch.series.se.clone())?;
    let summary = serde_json::to_string(&batch.summary).map_err(|e| PyValueError::new_err(e.to_string()))?;
    out.set_item("summary_json", summary)?;
    Ok(out)
}

/// Runs the invariant suite; returns `(name, passed, detail)` triples.
#[pyfunction]
fn selftest() -> Vec<(String, bool, String)> {
    cbwk::selftest::run_selftest()
        .into_iter()
        .map(|r| (r.name.to_string(), r.passed, r.detail))
        .collect()
}

#[pymodule]
fn cbwk_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCourtEnvironment>()?;
    m.add_function(wrap_pyfunction!(brute_force_opt, m)?)?;
    m.add_function(wrap_pyfunction!(minimize_dual, m)?)?;
    m.add_function(wrap_pyfunction!(ilog, m)?)?;
    m.add_function(wrap_pyfunction!(upsilon, m)?)?;
    m.add_function(wrap_pyfunction!(regime_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(margin_bt, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add("COURT_MU_STAR", fairness::COURT_MU_STAR.to_vec())?;
    Ok(())
}
