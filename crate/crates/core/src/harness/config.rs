//! Experiment configuration, read from TOML.
//!
//! ```toml
//! [env]
//! kind = "court"          # or "finite" with an inline [env.instance] table,
//! tau = 1e-7              # or "finite_file" with path = "instance.toml"
//!
//! [strategy]
//! kind = "pgd_adaptive"   # pgd_fixed | pgd_adaptive | primal | mixed | oracle_static
//! threshold_mode = "practical"
//! c = 0.01
//!
//! [run]
//! horizon = 10000
//! warmup = 50
//! seeds = 20
//! base_seed = 0
//! delta = 0.05
//!
//! [margin]
//! convention = "spend"    # spend | uniform
//! b = 0.005
//!
//! [estimator]
//! kind = "logistic"       # logistic | linear | oracle
//! c_delta = 0.025
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dual_strategy::ThresholdMode;
use crate::error::{CbwkError, Result};
use crate::fairness::SigmoidConvention;
use crate::finite::FiniteInstance;
use crate::primal::{BetaSource, SlackMode, DEFAULT_XI_CONSTANT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Court {
        tau: f64,
        #[serde(default)]
        convention: SigmoidConvention,
    },
    Finite {
        instance: FiniteInstance,
    },
    FiniteFile {
        path: PathBuf,
    },
}

fn default_c() -> f64 {
    0.01
}

fn one() -> f64 {
    1.0
}

fn practical() -> ThresholdMode {
    ThresholdMode::Practical
}

fn running_beta() -> BetaSource {
    BetaSource::Running
}

fn xi_constant() -> f64 {
    DEFAULT_XI_CONSTANT
}

fn opt_samples() -> usize {
    10_000
}

fn opt_reps() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    PgdFixed {
        gamma: f64,
    },
    PgdAdaptive {
        #[serde(default = "practical")]
        threshold_mode: ThresholdMode,
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default = "one")]
        beta_constant: f64,
    },
    Primal {
        slack: SlackMode,
        #[serde(default = "running_beta")]
        beta: BetaSource,
        /// Use the true context distribution instead of the empirical one.
        #[serde(default)]
        exact_nu: bool,
        #[serde(default = "xi_constant")]
        xi_constant: f64,
    },
    /// Fixed multipliers; estimated once per batch when not given.
    Mixed {
        #[serde(default)]
        lambda_star: Option<Vec<f64>>,
        #[serde(default = "opt_samples")]
        samples: usize,
        #[serde(default = "opt_reps")]
        reps: usize,
    },
    /// Optimal static policy computed from the true model.
    OracleStatic {
        #[serde(default = "opt_samples")]
        samples: usize,
        #[serde(default = "opt_reps")]
        reps: usize,
    },
}

impl StrategySpec {
    pub fn label(&self) -> String {
        match self {
            StrategySpec::PgdFixed { gamma } => format!("pgd_fixed(gamma={gamma})"),
            StrategySpec::PgdAdaptive { threshold_mode, c, .. } => match threshold_mode {
                ThresholdMode::Practical => format!("pgd_adaptive(practical, c={c})"),
                ThresholdMode::Theoretical => "pgd_adaptive(theoretical)".to_string(),
            },
            StrategySpec::Primal { slack, exact_nu, .. } => {
                let slack = match slack {
                    SlackMode::Soft => "soft",
                    SlackMode::HardNull => "hard_null",
                    SlackMode::HardGeneral => "hard_general",
                };
                if *exact_nu {
                    format!("primal({slack}, exact nu)")
                } else {
                    format!("primal({slack})")
                }
            }
            StrategySpec::Mixed { .. } => "mixed".to_string(),
            StrategySpec::OracleStatic { .. } => "oracle_static".to_string(),
        }
    }
}

fn default_warmup() -> usize {
    50
}

fn default_seeds() -> usize {
    20
}

fn default_delta() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub horizon: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Count warm-up rounds in the running averages and emit them.
    #[serde(default)]
    pub include_warmup: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginConvention {
    /// Margin on the leading spending components only.
    Spend,
    /// Margin on every component.
    Uniform,
}

fn spend_components() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginSpec {
    pub convention: MarginConvention,
    #[serde(default)]
    pub b: f64,
    /// Use `b_T` of the adaptive strategy instead of `b`.
    #[serde(default)]
    pub auto_bt: bool,
    #[serde(default = "spend_components")]
    pub spend_components: usize,
}

impl Default for MarginSpec {
    fn default() -> Self {
        Self {
            convention: MarginConvention::Uniform,
            b: 0.0,
            auto_bt: false,
            spend_components: 2,
        }
    }
}

impl MarginSpec {
    pub fn apply(&self, budget: &[f64], b: f64) -> Vec<f64> {
        let k = match self.convention {
            MarginConvention::Spend => self.spend_components,
            MarginConvention::Uniform => budget.len(),
        };
        budget
            .iter()
            .enumerate()
            .map(|(i, v)| if i < k { v - b } else { *v })
            .collect()
    }
}

fn logistic_c() -> f64 {
    0.025
}

fn linear_c() -> f64 {
    0.5
}

fn refit_until() -> usize {
    500
}

fn refit_interval() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Logistic {
        #[serde(default = "logistic_c")]
        c_delta: f64,
        #[serde(default)]
        lambda_reg: f64,
        #[serde(default = "refit_until")]
        refit_every_round_until: usize,
        #[serde(default = "refit_interval")]
        refit_interval: usize,
    },
    Linear {
        #[serde(default = "linear_c")]
        c_delta: f64,
        #[serde(default = "one")]
        lambda_reg: f64,
    },
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub strategy: StrategySpec,
    pub run: RunSpec,
    #[serde(default)]
    pub margin: MarginSpec,
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub label: Option<String>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CbwkError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CbwkError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        // instance paths are relative to the config file
        if let EnvSpec::FiniteFile { path: inst } = &mut cfg.env {
            if inst.is_relative() {
                if let Some(dir) = path.parent() {
                    *inst = dir.join(&*inst);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CbwkError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let run = &self.run;
        let bad = |m: &str| Err(CbwkError::Config(m.to_string()));
        if run.horizon == 0 {
            return bad("run.horizon must be positive");
        }
        if run.warmup > run.horizon {
            return bad("run.warmup exceeds run.horizon");
        }
        if run.seeds == 0 {
            return bad("run.seeds must be at least 1");
        }
        if !(run.delta > 0.0 && run.delta < 1.0) {
            return bad("run.delta must lie in (0, 1)");
        }
        if !(self.margin.b >= 0.0 && self.margin.b < 1.0) {
            return bad("margin.b must lie in [0, 1)");
        }
        match &self.strategy {
            StrategySpec::PgdFixed { gamma } if !(*gamma > 0.0) => return bad("strategy.gamma must be positive"),
            StrategySpec::PgdAdaptive { c, .. } if !(*c > 0.0) => return bad("strategy.c must be positive"),
            StrategySpec::Primal { .. } if matches!(self.env, EnvSpec::Court { .. }) => {
                return bad("the primal strategy needs a finite context set")
            }
            _ => {}
        }
        if matches!(self.estimator, EstimatorSpec::Logistic { .. }) && !matches!(self.env, EnvSpec::Court { .. }) {
            return bad("the logistic estimator is only defined for the court environment");
        }
        if let EnvSpec::Finite { instance } = &self.env {
            instance.validate().map_err(|e| CbwkError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.strategy.label())
    }
}
