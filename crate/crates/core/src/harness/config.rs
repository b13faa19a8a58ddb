//! Experiment configuration files (JSON).
//!
//! Minimal finite-model example:
//!
//! ```json
//! {
//!   "model": { "kind": "finite", "n_states": 2, "n_actions": 1,
//!              "kernel": [0.5, 0.5, 0.5, 0.5], "cost": [0.0, 1.0] },
//!   "strategy": "alg1",
//!   "horizon": 10,
//!   "seeds": [1]
//! }
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ContinuousModel, CostModel, CostTable, FiniteKernel};
use crate::quantize::KernelMode;

use super::bench::B_SWEEP;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub quantization: QuantizationSpec,
    #[serde(default)]
    pub plant: PlantKind,
    pub strategy: Strategy,
    #[serde(default)]
    pub params: StrategyParams,
    #[serde(default)]
    pub family: Option<FamilySpec>,
    /// Prior over family members; uniform when absent.
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
    pub horizon: usize,
    #[serde(default)]
    pub checkpoints: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("borel-adapt-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ModelSpec {
    /// Row-major kernel, `kernel[(x·n_actions + u)·n_states + y]`, and
    /// row-major costs `cost[x·n_actions + u]`.
    Finite {
        n_states: usize,
        n_actions: usize,
        kernel: Vec<f64>,
        cost: Vec<f64>,
        #[serde(default = "one")]
        c_max: f64,
    },
    Continuous {
        a: f64,
        b: f64,
        p_full: f64,
        sigma: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizationSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub mode: QuantizationMode,
    /// Samples per row in Monte Carlo mode.
    pub samples: usize,
    /// Seed of the Monte Carlo kernel estimate.
    pub seed: u64,
}

impl Default for QuantizationSpec {
    fn default() -> Self {
        QuantizationSpec {
            n_states: 8,
            n_actions: 8,
            mode: QuantizationMode::Exact,
            samples: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuantizationMode {
    #[default]
    Exact,
    MonteCarlo,
}

/// What the controller interacts with when the model is continuous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    /// Transitions drawn from the quantized kernel `P_n`.
    #[default]
    Quantized,
    /// Transitions drawn from the continuous model itself.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Alg1,
    Alg2,
    Alternating,
    Simultaneous,
    /// Posterior tracking under uniform exploration.
    Identify,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Alg1 => "alg1",
            Strategy::Alg2 => "alg2",
            Strategy::Alternating => "alternating",
            Strategy::Simultaneous => "simultaneous",
            Strategy::Identify => "identify",
        }
    }

    fn uses_family(self) -> bool {
        matches!(
            self,
            Strategy::Alternating | Strategy::Simultaneous | Strategy::Identify
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyParams {
    /// Dobrushin bound of the Algorithm II gate.
    pub beta: f64,
    pub replan_every: usize,
    /// Cycle length of the alternating schedule.
    pub t_prime: usize,
    /// Exploration steps per cycle; `ceil(sqrt(t_prime))` when absent.
    pub t_l: Option<usize>,
    /// Number of cycles; `horizon / t_prime` when absent.
    pub cycles: Option<usize>,
    pub epsilon: f64,
    pub absorb_exploit_data: bool,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            beta: 0.7,
            replan_every: 1,
            t_prime: 1000,
            t_l: None,
            cycles: None,
            epsilon: 0.5,
            absorb_exploit_data: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum FamilySpec {
    /// The continuous model with its drift replaced by each value, quantized.
    BSweep {
        #[serde(default = "default_b_values")]
        b_values: Vec<f64>,
        true_index: Option<usize>,
    },
    /// Row-major kernels with the model's shape.
    Explicit {
        kernels: Vec<Vec<f64>>,
        #[serde(default)]
        labels: Vec<String>,
        true_index: Option<usize>,
    },
}

fn default_b_values() -> Vec<f64> {
    B_SWEEP.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Allowed cost gap, as a fraction of `c_max`.
    pub gap: f64,
    /// Allowed max-row TV error of the final estimate (Algorithm I).
    pub est_err: f64,
    /// Required posterior mass on the truth (identification).
    pub posterior_mass: f64,
    /// Fraction of seeds that must pass.
    pub pass_fraction: f64,
    pub trailing_window: usize,
    pub planner: f64,
    pub planner_max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            gap: 0.05,
            est_err: 0.05,
            posterior_mass: 0.99,
            pass_fraction: 0.9,
            trailing_window: 10_000,
            planner: 1e-9,
            planner_max_iter: 100_000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Shape of the controlled MDP.
    pub fn dims(&self) -> (usize, usize) {
        match &self.model {
            ModelSpec::Finite {
                n_states,
                n_actions,
                ..
            } => (*n_states, *n_actions),
            ModelSpec::Continuous { .. } => (self.quantization.n_states, self.quantization.n_actions),
        }
    }

    pub fn kernel_mode(&self) -> KernelMode {
        match self.quantization.mode {
            QuantizationMode::Exact => KernelMode::Exact,
            QuantizationMode::MonteCarlo => KernelMode::MonteCarlo {
                samples: self.quantization.samples,
                seed: self.quantization.seed,
            },
        }
    }

    /// Checks every documented range; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        match &self.model {
            ModelSpec::Finite {
                n_states,
                n_actions,
                kernel,
                cost,
                c_max,
            } => {
                if *n_states == 0 || *n_actions == 0 {
                    return Err(Error::config("model", "n_states and n_actions must be positive"));
                }
                FiniteKernel::new(*n_states, *n_actions, kernel.clone())
                    .map_err(|e| Error::config("model.kernel", e.to_string()))?;
                CostTable::new(*n_states, *n_actions, cost.clone(), *c_max)
                    .map_err(|e| Error::config("model.cost", e.to_string()))?;
                if self.plant == PlantKind::Continuous {
                    return Err(Error::config("plant", "a finite model has no continuous plant"));
                }
            }
            ModelSpec::Continuous {
                a,
                b,
                p_full,
                sigma,
            } => {
                ContinuousModel::new(*a, *b, *p_full, *sigma)
                    .map_err(|e| Error::config("model", e.to_string()))?;
                let q = &self.quantization;
                if q.n_states == 0 {
                    return Err(Error::config("quantization.n_states", "must be positive"));
                }
                if q.n_actions == 0 {
                    return Err(Error::config("quantization.n_actions", "must be positive"));
                }
                if q.mode == QuantizationMode::MonteCarlo && q.samples == 0 {
                    return Err(Error::config("quantization.samples", "must be positive"));
                }
            }
        }
        self.cost
            .validate()
            .map_err(|e| Error::config("cost", e.to_string()))?;
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if let Some(&cp) = self.checkpoints.iter().find(|&&c| c == 0 || c > self.horizon) {
            return Err(Error::config(
                "checkpoints",
                format!("checkpoint {cp} outside [1, horizon]"),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        let mut seen = BTreeSet::new();
        for (i, s) in self.seeds.iter().enumerate() {
            if !seen.insert(s) {
                return Err(Error::config(format!("seeds[{i}]"), format!("duplicate seed {s}")));
            }
        }
        self.validate_params()?;
        self.validate_tolerances()?;
        self.validate_family()
    }

    fn validate_params(&self) -> Result<()> {
        let p = &self.params;
        if !(0.0..=1.0).contains(&p.beta) {
            return Err(Error::config("params.beta", "must lie in [0, 1]"));
        }
        if p.replan_every == 0 {
            return Err(Error::config("params.replan_every", "must be at least 1"));
        }
        if !(p.epsilon > 0.0) {
            return Err(Error::config("params.epsilon", "must be positive"));
        }
        if self.strategy == Strategy::Alternating {
            if p.t_prime < 2 {
                return Err(Error::config("params.t_prime", "must be at least 2"));
            }
            if let Some(t_l) = p.t_l {
                if t_l == 0 || t_l >= p.t_prime {
                    return Err(Error::config("params.t_l", "must lie in [1, t_prime)"));
                }
            }
            match p.cycles {
                Some(0) => return Err(Error::config("params.cycles", "must be at least 1")),
                None if self.horizon < p.t_prime => {
                    return Err(Error::config("horizon", "shorter than one alternating cycle"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn validate_tolerances(&self) -> Result<()> {
        let t = &self.tolerances;
        let checks = [
            ("tolerances.gap", t.gap > 0.0),
            ("tolerances.est_err", t.est_err > 0.0),
            (
                "tolerances.posterior_mass",
                t.posterior_mass > 0.0 && t.posterior_mass <= 1.0,
            ),
            (
                "tolerances.pass_fraction",
                (0.0..=1.0).contains(&t.pass_fraction),
            ),
            ("tolerances.trailing_window", t.trailing_window > 0),
            ("tolerances.planner", t.planner > 0.0),
            ("tolerances.planner_max_iter", t.planner_max_iter > 0),
        ];
        for (path, ok) in checks {
            if !ok {
                return Err(Error::config(path, "out of range"));
            }
        }
        Ok(())
    }

    fn validate_family(&self) -> Result<()> {
        let (n, m) = self.dims();
        let len = match (&self.family, self.strategy.uses_family()) {
            (None, true) => {
                return Err(Error::config(
                    "family",
                    format!("strategy `{}` needs a candidate family", self.strategy.name()),
                ))
            }
            (None, false) => return Ok(()),
            (Some(FamilySpec::BSweep { b_values, true_index }), _) => {
                let ModelSpec::Continuous { .. } = self.model else {
                    return Err(Error::config("family", "b_sweep needs a continuous model"));
                };
                if b_values.is_empty() {
                    return Err(Error::config("family.b_values", "must not be empty"));
                }
                check_true_index(*true_index, b_values.len())?;
                b_values.len()
            }
            (
                Some(FamilySpec::Explicit {
                    kernels,
                    labels,
                    true_index,
                }),
                _,
            ) => {
                if kernels.is_empty() {
                    return Err(Error::config("family.kernels", "must not be empty"));
                }
                for (i, k) in kernels.iter().enumerate() {
                    FiniteKernel::new(n, m, k.clone())
                        .map_err(|e| Error::config(format!("family.kernels[{i}]"), e.to_string()))?;
                }
                if !labels.is_empty() && labels.len() != kernels.len() {
                    return Err(Error::config("family.labels", "one label per kernel"));
                }
                check_true_index(*true_index, kernels.len())?;
                kernels.len()
            }
        };
        if let Some(prior) = &self.prior {
            if prior.len() != len {
                return Err(Error::config("prior", format!("expected {len} weights")));
            }
            if prior.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || prior.iter().sum::<f64>() <= 0.0
            {
                return Err(Error::config("prior", "weights must be nonnegative with positive sum"));
            }
        }
        Ok(())
    }
}

fn check_true_index(i: Option<usize>, len: usize) -> Result<()> {
    match i {
        Some(i) if i >= len => Err(Error::config(
            "family.true_index",
            format!("{i} out of range for {len} members"),
        )),
        _ => Ok(()),
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_json(&text)
}
