use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::{check_observation, BetaAccumulator, Estimator, FeatureMap, INITIAL_WIDTH, MAX_WIDTH};
use crate::error::{invalid, Result};
use crate::problem::{ActionId, ContextVector};

#[derive(Debug, Clone, Copy)]
pub struct LinearUcbConfig {
    /// Width constant; any log factor is folded into it.
    pub c_delta: f64,
    /// Ridge regularizer, so that `V_0 = λ_reg · I`.
    pub lambda_reg: f64,
    /// Re-invert `V_t` from scratch every this many updates.
    pub recompute_every: Option<usize>,
}

impl Default for LinearUcbConfig {
    fn default() -> Self {
        Self {
            c_delta: 0.5,
            lambda_reg: 1.0,
            recompute_every: Some(1000),
        }
    }
}

/// Ridge-regression estimates of the reward and of each cost component over a
/// shared design matrix `V_t = λ_reg·I + Σ φ φᵀ`, whose inverse is maintained
/// with rank-one Sherman–Morrison updates.
pub struct LinearUcbEstimator {
    features: Arc<dyn FeatureMap>,
    cfg: LinearUcbConfig,
    d: usize,
    design: DMatrix<f64>,
    design_inv: DMatrix<f64>,
    // column 0: reward, columns 1..=d: costs
    targets: DMatrix<f64>,
    theta: DMatrix<f64>,
    beta: BetaAccumulator,
    t: usize,
}

impl LinearUcbEstimator {
    pub fn new(features: Arc<dyn FeatureMap>, d: usize, cfg: LinearUcbConfig) -> Result<Self> {
        if !(cfg.lambda_reg > 0.0) {
            return Err(invalid("linear estimator needs a positive ridge regularizer"));
        }
        if !(cfg.c_delta >= 0.0) {
            return Err(invalid("width constant must be nonnegative"));
        }
        let p = features.dim();
        Ok(Self {
            features,
            cfg,
            d,
            design: DMatrix::identity(p, p) * cfg.lambda_reg,
            design_inv: DMatrix::identity(p, p) / cfg.lambda_reg,
            targets: DMatrix::zeros(p, d + 1),
            theta: DMatrix::zeros(p, d + 1),
            beta: BetaAccumulator::new(),
            t: 0,
        })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn design_inverse(&self) -> &DMatrix<f64> {
        &self.design_inv
    }

    /// `φᵀ V_t⁻¹ φ`.
    pub fn quadratic_form(&self, x: &ContextVector, a: ActionId) -> f64 {
        let phi = DVector::from_vec(self.features.features(x, a));
        phi.dot(&(&self.design_inv * &phi)).max(0.0)
    }

    /// Uncapped `C_δ √(φᵀ V_t⁻¹ φ)`.
    pub fn width(&self, x: &ContextVector, a: ActionId) -> f64 {
        self.cfg.c_delta * self.quadratic_form(x, a).sqrt()
    }

    /// Relative Frobenius distance between the maintained inverse and a fresh
    /// inversion of `V_t`.
    pub fn inverse_drift(&self) -> f64 {
        match self.design.clone().cholesky() {
            Some(ch) => {
                let fresh = ch.inverse();
                (&self.design_inv - &fresh).norm() / fresh.norm()
            }
            None => f64::INFINITY,
        }
    }

    fn refresh_inverse(&mut self) {
        if let Some(ch) = self.design.clone().cholesky() {
            let fresh = ch.inverse();
            let drift = (&self.design_inv - &fresh).norm() / fresh.norm();
            if drift > 1e-6 {
                warn!("maintained design inverse drifted by {drift:.3e}; replaced");
            }
            self.design_inv = fresh;
        }
    }

    fn predict(&self, x: &ContextVector, a: ActionId, column: usize) -> f64 {
        let phi = self.features.features(x, a);
        phi.iter()
            .enumerate()
            .map(|(i, v)| v * self.theta[(i, column)])
            .sum()
    }
}

impl Estimator for LinearUcbEstimator {
    fn cost_dim(&self) -> usize {
        self.d
    }

    fn rounds(&self) -> usize {
        self.t
    }

    fn reward_estimate(&self, x: &ContextVector, a: ActionId) -> f64 {
        if self.t == 0 {
            return 0.5;
        }
        self.predict(x, a, 0).clamp(0.0, 1.0)
    }

    fn cost_estimate(&self, x: &ContextVector, a: ActionId) -> Vec<f64> {
        if self.t == 0 {
            return vec![0.0; self.d];
        }
        (1..=self.d)
            .map(|k| self.predict(x, a, k).clamp(-1.0, 1.0))
            .collect()
    }

    fn epsilon(&self, x: &ContextVector, a: ActionId) -> f64 {
        if self.t == 0 {
            return INITIAL_WIDTH;
        }
        self.width(x, a).min(MAX_WIDTH)
    }

    fn update(&mut self, x: &ContextVector, a: ActionId, r: f64, c: &[f64]) -> Result<()> {
        check_observation(r, c, self.d)?;
        self.beta.add(self.epsilon(x, a));

        let phi = DVector::from_vec(self.features.features(x, a));
        let v_phi = &self.design_inv * &phi;
        let denom = 1.0 + phi.dot(&v_phi);
        self.design_inv -= (&v_phi * v_phi.transpose()) / denom;
        self.design += &phi * phi.transpose();

        let mut y = DVector::zeros(self.d + 1);
        y[0] = r;
        for (k, ck) in c.iter().enumerate() {
            y[k + 1] = *ck;
        }
        self.targets += &phi * y.transpose();
        self.t += 1;

        if let Some(every) = self.cfg.recompute_every {
            if every > 0 && self.t % every == 0 {
                self.refresh_inverse();
            }
        }
        self.theta = &self.design_inv * &self.targets;
        Ok(())
    }

    fn beta(&self) -> f64 {
        self.beta.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{PerActionLinearFeatures, TabularFeatures};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_features() -> Arc<dyn FeatureMap> {
        Arc::new(TabularFeatures::new(1, 3))
    }

    fn ctx() -> ContextVector {
        ContextVector::new(vec![0.0]).unwrap().with_support_index(0)
    }

    #[test]
    fn sherman_morrison_on_identity() {
        let mut est = LinearUcbEstimator::new(
            unit_features(),
            1,
            LinearUcbConfig {
                c_delta: 1.0,
                lambda_reg: 1.0,
                recompute_every: None,
            },
        )
        .unwrap();
        est.update(&ctx(), ActionId(0), 1.0, &[0.0]).unwrap();
        assert!((est.design_inverse()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((est.design_inverse()[(1, 1)] - 1.0).abs() < 1e-15);
        assert!((est.design()[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn no_data_is_maximally_optimistic() {
        let est =
            LinearUcbEstimator::new(unit_features(), 2, LinearUcbConfig::default()).unwrap();
        assert_eq!(est.reward_ucb(&ctx(), ActionId(1)), 1.0);
        assert_eq!(est.cost_lcb(&ctx(), ActionId(1)), vec![-1.0, -1.0]);
    }

    #[test]
    fn width_shrinks_along_observed_direction() {
        let mut est = LinearUcbEstimator::new(
            unit_features(),
            1,
            LinearUcbConfig {
                c_delta: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        let mut prev = est.quadratic_form(&ctx(), ActionId(2));
        for _ in 0..20 {
            est.update(&ctx(), ActionId(2), 0.3, &[0.1]).unwrap();
            let now = est.quadratic_form(&ctx(), ActionId(2));
            assert!(now < prev);
            prev = now;
        }
        // the tabular ridge estimate is n·y/(n+1)
        assert!((est.reward_estimate(&ctx(), ActionId(2)) - 0.3 * 20.0 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn maintained_inverse_matches_fresh_after_many_updates() {
        let feats: Arc<dyn FeatureMap> = Arc::new(PerActionLinearFeatures::new(3, 2));
        let mut est = LinearUcbEstimator::new(
            feats,
            1,
            LinearUcbConfig {
                c_delta: 1.0,
                lambda_reg: 1.0,
                recompute_every: None,
            },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let x = ContextVector::new((0..3).map(|_| rng.random::<f64>()).collect()).unwrap();
            let a = ActionId(rng.random_range(0..2));
            est.update(&x, a, rng.random(), &[rng.random::<f64>() * 2.0 - 1.0])
                .unwrap();
        }
        assert!(est.inverse_drift() < 1e-6, "drift {}", est.inverse_drift());
    }

    #[test]
    fn rejects_non_finite() {
        let mut est =
            LinearUcbEstimator::new(unit_features(), 1, LinearUcbConfig::default()).unwrap();
        assert!(est.update(&ctx(), ActionId(0), f64::NAN, &[0.0]).is_err());
        assert_eq!(est.rounds(), 0);
    }
}
