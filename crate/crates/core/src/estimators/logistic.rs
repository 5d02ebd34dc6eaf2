use std::sync::Arc;

use log::{debug, info};
use nalgebra::{DMatrix, DVector};

use super::{check_observation, BetaAccumulator, Estimator, FeatureMap, INITIAL_WIDTH, MAX_WIDTH};
use crate::error::{invalid, Result};
use crate::problem::{ActionId, ContextVector, Environment};

/// Ridge used when the unpenalized likelihood has no finite maximizer, and as
/// the floor added to `V_t` before inversion.
pub const FLOOR_RIDGE: f64 = 1e-8;
const GRAD_TOL: f64 = 1e-8;
const MAX_NEWTON_ITERS: usize = 100;

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Cost function known to the learner (no estimation needed).
pub trait CostFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn cost(&self, x: &ContextVector, a: ActionId) -> Vec<f64>;
}

/// Exposes an environment's expected costs as a known cost function.
pub struct EnvironmentCosts(pub Arc<dyn Environment>);

impl CostFunction for EnvironmentCosts {
    fn dim(&self) -> usize {
        self.0.cost_dim()
    }

    fn cost(&self, x: &ContextVector, a: ActionId) -> Vec<f64> {
        self.0.expected_cost(x, a)
    }
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub mu: Vec<f64>,
    pub converged: bool,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Ridge actually used (the floor ridge when the requested one failed).
    pub ridge: f64,
}

/// Maximizes the ridge-penalized Bernoulli log-likelihood
/// `Σ y log σ(φᵀμ) + (1−y) log(1−σ(φᵀμ)) − λ/2 ‖μ‖²` by Newton–Raphson with
/// step halving.
///
/// `features` is row-major with `labels.len()` rows. Labels may be any value
/// in `[0, 1]`. When `lambda_reg = 0` and the data are separable the
/// maximizer does not exist; the fit is then redone with [`FLOOR_RIDGE`].
pub fn fit_logistic_mle(
    features: &[f64],
    labels: &[f64],
    dim: usize,
    lambda_reg: f64,
    init: Option<&[f64]>,
) -> Result<LogisticFit> {
    if labels.is_empty() {
        return Err(invalid("logistic fit on an empty buffer"));
    }
    if features.len() != labels.len() * dim {
        return Err(invalid("feature buffer does not match label count"));
    }
    if labels.iter().any(|y| !(0.0..=1.0).contains(y)) {
        return Err(invalid("logistic labels must lie in [0, 1]"));
    }
    if !(lambda_reg >= 0.0) {
        return Err(invalid("negative ridge"));
    }
    let start = init.map(|m| m.to_vec()).unwrap_or_else(|| vec![0.0; dim]);
    let fit = newton(features, labels, dim, lambda_reg, &start);
    if lambda_reg >= FLOOR_RIDGE
        || (fit.converged && !fits_perfectly(features, labels, dim, &fit.mu))
    {
        return Ok(fit);
    }
    debug!(
        "unpenalized logistic fit diverges or separates the data (grad {:.3e}); refitting with floor ridge",
        fit.grad_norm
    );
    let mut retry = newton(features, labels, dim, FLOOR_RIDGE, &start);
    if !retry.converged {
        let from_zero = newton(features, labels, dim, FLOOR_RIDGE, &vec![0.0; dim]);
        if from_zero.grad_norm < retry.grad_norm {
            retry = from_zero;
        }
    }
    Ok(retry)
}

/// Every label reproduced to within 1e-6: the unpenalized MLE sits at infinity
/// and a "converged" iterate only reflects saturated sigmoids.
fn fits_perfectly(features: &[f64], labels: &[f64], dim: usize, mu: &[f64]) -> bool {
    features.chunks_exact(dim).zip(labels).all(|(row, y)| {
        let z: f64 = row.iter().zip(mu).map(|(f, m)| f * m).sum();
        (y - sigmoid(z)).abs() < 1e-6
    })
}

fn log_likelihood(features: &[f64], labels: &[f64], dim: usize, ridge: f64, mu: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (row, y) in features.chunks_exact(dim).zip(labels) {
        let z: f64 = row.iter().zip(mu).map(|(f, m)| f * m).sum();
        ll += y * z - softplus(z);
    }
    ll - 0.5 * ridge * mu.iter().map(|m| m * m).sum::<f64>()
}

fn newton(features: &[f64], labels: &[f64], dim: usize, ridge: f64, start: &[f64]) -> LogisticFit {
    let mut mu = start.to_vec();
    let mut grad = vec![0.0; dim];
    let mut hess = DMatrix::<f64>::zeros(dim, dim);
    let mut grad_norm = f64::INFINITY;
    let mut objective = log_likelihood(features, labels, dim, ridge, &mu);

    for iter in 0..=MAX_NEWTON_ITERS {
        grad.iter_mut().for_each(|g| *g = 0.0);
        hess.fill(0.0);
        for (row, y) in features.chunks_exact(dim).zip(labels) {
            let z: f64 = row.iter().zip(&mu).map(|(f, m)| f * m).sum();
            let s = sigmoid(z);
            let w = s * (1.0 - s);
            let resid = y - s;
            for i in 0..dim {
                if row[i] == 0.0 {
                    continue;
                }
                grad[i] += resid * row[i];
                let wi = w * row[i];
                for j in i..dim {
                    hess[(i, j)] += wi * row[j];
                }
            }
        }
        for i in 0..dim {
            grad[i] -= ridge * mu[i];
            hess[(i, i)] += ridge;
            for j in 0..i {
                hess[(i, j)] = hess[(j, i)];
            }
        }
        grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm <= GRAD_TOL {
            return LogisticFit {
                mu,
                converged: true,
                grad_norm,
                iterations: iter,
                ridge,
            };
        }
        if iter == MAX_NEWTON_ITERS || mu.iter().any(|m| !m.is_finite() || m.abs() > 1e8) {
            break;
        }
        let Some(chol) = hess.clone().cholesky() else {
            break;
        };
        let step = chol.solve(&DVector::from_column_slice(&grad));

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = mu.iter().zip(step.iter()).map(|(m, s)| m + scale * s).collect();
            let obj = log_likelihood(features, labels, dim, ridge, &cand);
            if obj >= objective - 1e-12 * objective.abs().max(1.0) {
                mu = cand;
                objective = obj;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    LogisticFit {
        mu,
        converged: false,
        grad_norm,
        iterations: MAX_NEWTON_ITERS,
        ridge,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LogisticUcbConfig {
    pub c_delta: f64,
    pub lambda_reg: f64,
    /// Refit after every observation while `t` is at most this value...
    pub refit_every_round_until: usize,
    /// ...then only every this many observations.
    pub refit_interval: usize,
    /// Re-invert the design matrix from scratch every this many updates.
    pub recompute_every: usize,
}

impl Default for LogisticUcbConfig {
    fn default() -> Self {
        Self {
            c_delta: 0.025,
            lambda_reg: 0.0,
            refit_every_round_until: 500,
            refit_interval: 10,
            recompute_every: 100,
        }
    }
}

/// Logistic reward model `r(x, a) = σ(φ(x, a)ᵀ μ)` fitted by maximum likelihood,
/// with width `ε_t = C_δ (1 + ln t) √(φᵀ V_t⁻¹ φ)`. Costs are known to the
/// learner and returned exactly.
pub struct LogisticUcbEstimator {
    features: Arc<dyn FeatureMap>,
    costs: Arc<dyn CostFunction>,
    cfg: LogisticUcbConfig,
    mu: Vec<f64>,
    design: DMatrix<f64>,
    design_inv: DMatrix<f64>,
    buffer_features: Vec<f64>,
    buffer_labels: Vec<f64>,
    beta: BetaAccumulator,
    t: usize,
    warned_floor: bool,
}

impl LogisticUcbEstimator {
    pub fn new(
        features: Arc<dyn FeatureMap>,
        costs: Arc<dyn CostFunction>,
        cfg: LogisticUcbConfig,
    ) -> Result<Self> {
        if !(cfg.lambda_reg >= 0.0) || !(cfg.c_delta >= 0.0) {
            return Err(invalid("logistic estimator constants must be nonnegative"));
        }
        let p = features.dim();
        let reg = cfg.lambda_reg.max(FLOOR_RIDGE);
        Ok(Self {
            features,
            costs,
            cfg,
            mu: vec![0.0; p],
            design: DMatrix::identity(p, p) * cfg.lambda_reg,
            design_inv: DMatrix::identity(p, p) / reg,
            buffer_features: Vec::new(),
            buffer_labels: Vec::new(),
            beta: BetaAccumulator::new(),
            t: 0,
            warned_floor: false,
        })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Uncapped `C_δ (1 + ln max(t, 1)) √(φᵀ V_t⁻¹ φ)` for an explicit `t`.
    pub fn width_at(&self, x: &ContextVector, a: ActionId, t: usize) -> f64 {
        let phi = DVector::from_vec(self.features.features(x, a));
        let q = phi.dot(&(&self.design_inv * &phi)).max(0.0);
        self.cfg.c_delta * (1.0 + (t.max(1) as f64).ln()) * q.sqrt()
    }

    pub fn refit(&mut self) -> Result<()> {
        let fit = fit_logistic_mle(
            &self.buffer_features,
            &self.buffer_labels,
            self.features.dim(),
            self.cfg.lambda_reg,
            Some(&self.mu),
        )?;
        if fit.ridge > self.cfg.lambda_reg && !self.warned_floor {
            info!(
                "logistic likelihood has no finite maximizer at t = {}; using floor ridge {FLOOR_RIDGE:e}",
                self.t
            );
            self.warned_floor = true;
        }
        if fit.mu.iter().all(|m| m.is_finite()) {
            self.mu = fit.mu;
        }
        Ok(())
    }

    fn invert_design(&self) -> Option<DMatrix<f64>> {
        let p = self.design.nrows();
        let floor = if self.cfg.lambda_reg < FLOOR_RIDGE {
            FLOOR_RIDGE
        } else {
            0.0
        };
        (&self.design + DMatrix::identity(p, p) * floor)
            .cholesky()
            .map(|c| c.inverse())
    }
}

impl Estimator for LogisticUcbEstimator {
    fn cost_dim(&self) -> usize {
        self.costs.dim()
    }

    fn rounds(&self) -> usize {
        self.t
    }

    fn reward_estimate(&self, x: &ContextVector, a: ActionId) -> f64 {
        let phi = self.features.features(x, a);
        sigmoid(phi.iter().zip(&self.mu).map(|(f, m)| f * m).sum())
    }

    fn cost_estimate(&self, x: &ContextVector, a: ActionId) -> Vec<f64> {
        self.costs.cost(x, a)
    }

    fn epsilon(&self, x: &ContextVector, a: ActionId) -> f64 {
        if self.t == 0 {
            return INITIAL_WIDTH;
        }
        self.width_at(x, a, self.t).min(MAX_WIDTH)
    }

    fn cost_lcb(&self, x: &ContextVector, a: ActionId) -> Vec<f64> {
        self.costs.cost(x, a)
    }

    fn update(&mut self, x: &ContextVector, a: ActionId, r: f64, c: &[f64]) -> Result<()> {
        check_observation(r, c, self.costs.dim())?;
        self.beta.add(self.epsilon(x, a));

        let phi = self.features.features(x, a);
        let phi_v = DVector::from_column_slice(&phi);
        let v_phi = &self.design_inv * &phi_v;
        let denom = 1.0 + phi_v.dot(&v_phi);
        self.design_inv -= (&v_phi * v_phi.transpose()) / denom;
        self.design += &phi_v * phi_v.transpose();
        self.buffer_features.extend_from_slice(&phi);
        self.buffer_labels.push(r);
        self.t += 1;

        if self.cfg.recompute_every > 0 && self.t % self.cfg.recompute_every == 0 {
            if let Some(fresh) = self.invert_design() {
                self.design_inv = fresh;
            }
        }
        let interval = self.cfg.refit_interval.max(1);
        if self.t <= self.cfg.refit_every_round_until || self.t % interval == 0 {
            self.refit()?;
        }
        Ok(())
    }

    fn beta(&self) -> f64 {
        self.beta.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct NoCosts;
    impl CostFunction for NoCosts {
        fn dim(&self) -> usize {
            1
        }
        fn cost(&self, _: &ContextVector, _: ActionId) -> Vec<f64> {
            vec![0.0]
        }
    }

    struct Unit;
    impl FeatureMap for Unit {
        fn dim(&self) -> usize {
            1
        }
        fn write(&self, _: &ContextVector, _: ActionId, out: &mut [f64]) {
            out[0] = 1.0;
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(1.5) - 0.817_574_476_193_643_7).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn all_ones_with_ridge_has_finite_optimum() {
        let features = vec![1.0; 20];
        let labels = vec![1.0; 20];
        let fit = fit_logistic_mle(&features, &labels, 1, 1.0, None).unwrap();
        assert!(fit.converged);
        assert!(fit.grad_norm <= 1e-8);
        let mu = fit.mu[0];
        assert!(mu > 0.0 && mu.is_finite());
        // stationarity: n (1 − σ(μ)) = λ μ
        assert!((20.0 * (1.0 - sigmoid(mu)) - mu).abs() < 1e-8);
    }

    #[test]
    fn symmetric_balanced_data_gives_zero() {
        let features = vec![1.0, -1.0, 1.0, -1.0];
        let labels = vec![1.0, 1.0, 0.0, 0.0];
        let fit = fit_logistic_mle(&features, &labels, 1, 0.0, None).unwrap();
        assert!(fit.converged);
        assert!(fit.mu[0].abs() < 1e-10);
    }

    #[test]
    fn separable_data_falls_back_to_floor_ridge() {
        let features = vec![1.0, -1.0];
        let labels = vec![1.0, 0.0];
        let fit = fit_logistic_mle(&features, &labels, 1, 0.0, None).unwrap();
        assert_eq!(fit.ridge, FLOOR_RIDGE);
        assert!(fit.mu[0].is_finite() && fit.mu[0] > 5.0);
    }

    #[test]
    fn empty_buffer_is_an_error() {
        assert!(fit_logistic_mle(&[], &[], 2, 1.0, None).is_err());
    }

    #[test]
    fn width_formula_on_identity_design() {
        let est = LogisticUcbEstimator::new(
            Arc::new(Unit),
            Arc::new(NoCosts),
            LogisticUcbConfig {
                lambda_reg: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        let x = ContextVector::new(vec![]).unwrap();
        assert!((est.width_at(&x, ActionId(0), 1) - 0.025).abs() < 1e-15);
        assert_eq!(est.reward_ucb(&x, ActionId(0)), 1.0);
    }
}
