//! Exploration policies and the four adaptive strategies.
//!
//! Every run draws from three independent ChaCha8 substreams of its seed:
//! exploration coins, exploratory actions, and plant transitions. A run is
//! therefore a pure function of its inputs and seed.

mod bayesian;
mod empirical;

pub use bayesian::{
    run_alternating, run_identification, run_simultaneous, AlternatingConfig, SimultaneousConfig,
};
pub use empirical::{
    run_algorithm1, run_algorithm2, Algorithm2Outcome, EmpiricalConfig, EmpiricalOutcome,
    GATE_SLACK,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::l1;
use crate::models::{sample_index, ContinuousModel, CostModel, CostTable, FiniteKernel};
use crate::planner::{RviWorkspace, StationaryPolicy};
use crate::quantize::Quantizer;

pub(crate) const COIN_STREAM: u64 = 0;
pub(crate) const ACTION_STREAM: u64 = 1;
pub(crate) const TRANSITION_STREAM: u64 = 2;

/// Generator for one substream of a run seed.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Probability of an exploratory step at time `t ≥ 1` in Algorithms I and II.
pub fn exploration_probability(t: usize) -> f64 {
    if t <= 1 {
        1.0
    } else {
        1.0 / t as f64
    }
}

/// Visit and transition tallies over quantized `(state, action)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsTable {
    n_states: usize,
    n_actions: usize,
    visits: Vec<u64>,
    transitions: Vec<u64>,
}

impl CountsTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        CountsTable {
            n_states,
            n_actions,
            visits: vec![0; n_states * n_actions],
            transitions: vec![0; n_states * n_actions * n_states],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn record(&mut self, x: usize, u: usize, y: usize) -> Result<()> {
        if x >= self.n_states || y >= self.n_states {
            return Err(Error::StateOutOfRange {
                index: x.max(y),
                n_states: self.n_states,
            });
        }
        if u >= self.n_actions {
            return Err(Error::ActionOutOfRange {
                index: u,
                n_actions: self.n_actions,
            });
        }
        let r = x * self.n_actions + u;
        self.visits[r] += 1;
        self.transitions[r * self.n_states + y] += 1;
        Ok(())
    }

    pub fn visits(&self, x: usize, u: usize) -> u64 {
        self.visits[x * self.n_actions + u]
    }

    pub fn transitions(&self, x: usize, u: usize) -> &[u64] {
        let r = x * self.n_actions + u;
        &self.transitions[r * self.n_states..(r + 1) * self.n_states]
    }

    /// `Σ_y transitions[x,u,y] = visits[x,u]` for every pair.
    pub fn is_consistent(&self) -> bool {
        (0..self.visits.len()).all(|r| {
            self.transitions[r * self.n_states..(r + 1) * self.n_states]
                .iter()
                .sum::<u64>()
                == self.visits[r]
        })
    }

    /// Empirical row for `(x, u)`, if visited.
    pub fn row_estimate(&self, x: usize, u: usize) -> Option<Vec<f64>> {
        let v = self.visits(x, u);
        (v > 0).then(|| {
            self.transitions(x, u)
                .iter()
                .map(|&c| c as f64 / v as f64)
                .collect()
        })
    }
}

/// Frequency estimate of each visited row; unvisited rows come from `fallback`.
pub fn empirical_kernel(counts: &CountsTable, fallback: &FiniteKernel) -> Result<FiniteKernel> {
    if counts.n_states != fallback.n_states() || counts.n_actions != fallback.n_actions() {
        return Err(Error::ShapeMismatch("counts and fallback kernel differ in shape".into()));
    }
    let mut data = fallback.data().to_vec();
    let n = counts.n_states;
    for x in 0..n {
        for u in 0..counts.n_actions {
            if let Some(row) = counts.row_estimate(x, u) {
                let r = x * counts.n_actions + u;
                data[r * n..(r + 1) * n].copy_from_slice(&row);
            }
        }
    }
    FiniteKernel::from_raw(n, counts.n_actions, data)
}

/// `(1 − p)·γ_s + p·γ_e`, row by row.
pub fn mix_policies(
    gamma_s: &StationaryPolicy,
    gamma_e: &StationaryPolicy,
    p: f64,
    n_actions: usize,
) -> Result<StationaryPolicy> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("mixing weight {p} outside [0, 1]")));
    }
    if gamma_s.n_states() != gamma_e.n_states() {
        return Err(Error::LengthMismatch {
            expected: gamma_s.n_states(),
            actual: gamma_e.n_states(),
        });
    }
    gamma_s.validate(gamma_s.n_states(), n_actions)?;
    gamma_e.validate(gamma_e.n_states(), n_actions)?;
    let rows = gamma_s
        .to_rows(n_actions)
        .into_iter()
        .zip(gamma_e.to_rows(n_actions))
        .map(|(s, e)| s.iter().zip(&e).map(|(a, b)| (1.0 - p) * a + p * b).collect())
        .collect();
    Ok(StationaryPolicy::Randomized(rows))
}

/// Uniform action choice in every state.
pub fn uniform_exploration_policy(n_states: usize, n_actions: usize) -> Result<StationaryPolicy> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidArgument("state and action counts must be positive".into()));
    }
    Ok(StationaryPolicy::Randomized(vec![
        vec![1.0 / n_actions as f64; n_actions];
        n_states
    ]))
}

/// Per-state TV distance between two policies.
pub fn policy_tv(a: &StationaryPolicy, b: &StationaryPolicy, n_actions: usize) -> Vec<f64> {
    a.to_rows(n_actions)
        .iter()
        .zip(b.to_rows(n_actions))
        .map(|(r, s)| l1(r, &s))
        .collect()
}

/// Cycle and exploration lengths of the alternating strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub t_prime: usize,
    pub t_l: usize,
}

impl Schedule {
    pub fn new(t_prime: usize, t_l: usize) -> Result<Self> {
        if !(1 <= t_l && t_l < t_prime) {
            return Err(Error::InvalidArgument(format!(
                "schedule needs 1 <= T_l < T' (got T_l = {t_l}, T' = {t_prime})"
            )));
        }
        Ok(Schedule { t_prime, t_l })
    }

    /// `T_l = ceil(sqrt(T'))`.
    pub fn with_default_exploration(t_prime: usize) -> Result<Self> {
        Self::new(t_prime, (t_prime as f64).sqrt().ceil() as usize)
    }

    pub fn t_a(&self) -> usize {
        self.t_prime - self.t_l
    }
}

/// Phase bookkeeping of the simultaneous strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulState {
    pub phase_index: usize,
    pub map_change_count: usize,
}

impl SimulState {
    /// Posterior level `1 − 2^{−i}` that closes the current phase.
    pub fn threshold(&self) -> f64 {
        1.0 - 0.5f64.powi(self.phase_index.min(2000) as i32)
    }

    /// `1/(1+k)²`.
    pub fn exploration_prob(&self) -> f64 {
        let k = self.map_change_count as f64;
        1.0 / ((1.0 + k) * (1.0 + k))
    }
}

/// The system being controlled, observed through quantizer indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Plant {
    /// Transitions drawn from a finite kernel, typically `P_n`.
    Finite { kernel: FiniteKernel, cost: CostTable },
    /// The continuous benchmark; actions are applied at their bin centers.
    Continuous {
        model: ContinuousModel,
        cost: CostModel,
        states: Quantizer,
        actions: Quantizer,
    },
}

/// Current plant state: quantized index and, for continuous plants, the value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub index: usize,
    pub value: f64,
}

impl Plant {
    pub fn n_states(&self) -> usize {
        match self {
            Plant::Finite { kernel, .. } => kernel.n_states(),
            Plant::Continuous { states, .. } => states.len(),
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Plant::Finite { kernel, .. } => kernel.n_actions(),
            Plant::Continuous { actions, .. } => actions.len(),
        }
    }

    pub fn c_max(&self) -> f64 {
        match self {
            Plant::Finite { cost, .. } => cost.c_max(),
            Plant::Continuous { cost, .. } => cost.c_max(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Plant::Finite { kernel, cost } => {
                if !cost.matches(kernel) {
                    return Err(Error::ShapeMismatch("plant cost and kernel differ in shape".into()));
                }
            }
            Plant::Continuous {
                model,
                cost,
                states,
                actions,
            } => {
                model.validate()?;
                cost.validate()?;
                if !states.is_unit_grid() || !actions.is_unit_grid() {
                    return Err(Error::InvalidArgument(
                        "continuous plant needs 1-d grid quantizers".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// State at the center of bin `index`.
    pub fn start(&self, index: usize) -> Result<PlantState> {
        if index >= self.n_states() {
            return Err(Error::StateOutOfRange {
                index,
                n_states: self.n_states(),
            });
        }
        let value = match self {
            Plant::Finite { .. } => f64::NAN,
            Plant::Continuous { states, .. } => states.center(index)[0],
        };
        Ok(PlantState { index, value })
    }

    /// Incurs `c(x, u)` and moves to the next state.
    pub fn step<R: Rng + ?Sized>(&self, s: PlantState, u: usize, rng: &mut R) -> (f64, PlantState) {
        match self {
            Plant::Finite { kernel, cost } => {
                let c = cost.get(s.index, u);
                let y = sample_index(kernel.row(s.index, u), rng);
                (
                    c,
                    PlantState {
                        index: y,
                        value: f64::NAN,
                    },
                )
            }
            Plant::Continuous {
                model,
                cost,
                states,
                actions,
            } => {
                let a = actions.center(u)[0];
                let c = cost.eval(s.value, a);
                let y = model.sample(s.value, a, rng);
                (
                    c,
                    PlantState {
                        index: states.index_of_scalar(y),
                        value: y,
                    },
                )
            }
        }
    }
}

/// Optimal policy and gain of every family member.
pub(crate) fn solve_members(
    members: &[FiniteKernel],
    cost: &CostTable,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<(f64, Vec<usize>)>> {
    members
        .iter()
        .map(|k| {
            let mut ws = RviWorkspace::new(k.n_states());
            let r = ws.solve(k, cost, tol, max_iter)?;
            Ok((r.j_star, ws.policy))
        })
        .collect()
}
