//! Strategies that identify the kernel within a finite candidate family:
//! the alternating explore/exploit schedule and the simultaneous
//! exploration/exploitation policy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::empirical::plant_cost_table;
use super::{solve_members, substream, Plant, Schedule, SimulState};
use super::{ACTION_STREAM, COIN_STREAM, TRANSITION_STREAM};
use crate::bayes_id::{absorb, init_posterior, EpsilonNet, PosteriorState};
use crate::error::{Error, Result};
use crate::metrics::{l1, uniform_bl_distance};
use crate::models::{CandidateFamily, FiniteKernel, FiniteSpace};
use crate::record::{CycleStat, PhaseStart, RunRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternatingConfig {
    pub schedule: Schedule,
    pub cycles: usize,
    /// Radius of the candidate restriction applied after the first cycle.
    pub epsilon: f64,
    pub seed: u64,
    /// Also update the posterior on exploitation-phase transitions.
    pub absorb_exploit_data: bool,
    pub planner_tol: f64,
    pub planner_max_iter: usize,
    pub x0: usize,
}

impl AlternatingConfig {
    pub fn new(schedule: Schedule, cycles: usize, epsilon: f64, seed: u64) -> Self {
        AlternatingConfig {
            schedule,
            cycles,
            epsilon,
            seed,
            absorb_exploit_data: true,
            planner_tol: 1e-9,
            planner_max_iter: 100_000,
            x0: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimultaneousConfig {
    pub horizon: usize,
    pub seed: u64,
    pub planner_tol: f64,
    pub planner_max_iter: usize,
    pub x0: usize,
    pub trailing_window: usize,
}

impl SimultaneousConfig {
    pub fn new(horizon: usize, seed: u64) -> Self {
        SimultaneousConfig {
            horizon,
            seed,
            planner_tol: 1e-9,
            planner_max_iter: 100_000,
            x0: 0,
            trailing_window: 10_000,
        }
    }
}

struct Setup {
    posterior: PosteriorState,
    tracked: Option<usize>,
    policies: Vec<Vec<usize>>,
    member_err: Option<Vec<f64>>,
}

fn setup(
    plant: &Plant,
    family: &CandidateFamily,
    prior: &[f64],
    oracle: Option<&FiniteKernel>,
    tol: f64,
    max_iter: usize,
    x0: usize,
) -> Result<Setup> {
    plant.validate()?;
    if family.n_states() != plant.n_states() || family.n_actions() != plant.n_actions() {
        return Err(Error::ShapeMismatch("candidate family does not match the plant".into()));
    }
    if x0 >= plant.n_states() {
        return Err(Error::StateOutOfRange {
            index: x0,
            n_states: plant.n_states(),
        });
    }
    let posterior = init_posterior(prior, &EpsilonNet::singletons(family.len()))?;
    let cost = plant_cost_table(plant)?;
    let policies = solve_members(family.members(), &cost, tol, max_iter)?
        .into_iter()
        .map(|(_, p)| p)
        .collect();
    let member_err = oracle.map(|o| {
        family
            .members()
            .iter()
            .map(|m| {
                (0..m.n_rows())
                    .map(|r| l1(m.row_flat(r), o.row_flat(r)))
                    .fold(0.0, f64::max)
            })
            .collect()
    });
    Ok(Setup {
        posterior,
        tracked: family.true_index(),
        policies,
        member_err,
    })
}

pub(crate) fn tracked_mass(posterior: &PosteriorState, member: Option<usize>) -> f64 {
    match member {
        Some(j) => posterior.bin_mass_of(j),
        None => posterior.max_bin_weight(),
    }
}

/// Posterior tracking under uniform exploration: every action is drawn
/// uniformly and each transition updates the posterior. No control objective.
pub fn run_identification(
    plant: &Plant,
    family: &CandidateFamily,
    prior: &[f64],
    horizon: usize,
    seed: u64,
) -> Result<RunRecord> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    plant.validate()?;
    if family.n_states() != plant.n_states() || family.n_actions() != plant.n_actions() {
        return Err(Error::ShapeMismatch("candidate family does not match the plant".into()));
    }
    let mut posterior = init_posterior(prior, &EpsilonNet::singletons(family.len()))?;
    let tracked = family.true_index();
    let m = plant.n_actions();
    let mut action_rng = substream(seed, ACTION_STREAM);
    let mut plant_rng = substream(seed, TRANSITION_STREAM);
    let mut record = RunRecord::with_capacity(horizon);
    record.posterior_mass.reserve(horizon);
    let mut state = plant.start(0)?;
    let mut last_change = 0usize;
    for t in 0..horizon {
        let u = action_rng.gen_range(0..m);
        let (c, next) = plant.step(state, u, &mut plant_rng);
        let before = posterior.map_index;
        absorb(&mut posterior, family, (state.index, u, next.index)).map_err(|e| e.at_step(t))?;
        if posterior.map_index != before {
            last_change = t + 1;
        }
        record.push(state.index, u, c, true, None, Some(posterior.map_index), None);
        record.posterior_mass.push(tracked_mass(&posterior, tracked));
        state = next;
    }
    record.finish("identify", seed, None, horizon, Some(last_change));
    Ok(record)
}

/// Alternating strategy: each cycle of length `T'` explores for `T_l` steps
/// with uniform actions, then exploits the optimal policy of the MAP
/// candidate for `T' − T_l` steps. After the first cycle, candidates farther
/// than `epsilon` (uniform BL) from the first MAP estimate are discarded.
pub fn run_alternating(
    plant: &Plant,
    family: &CandidateFamily,
    prior: &[f64],
    states: &FiniteSpace,
    oracle: Option<&FiniteKernel>,
    j_star: Option<f64>,
    cfg: &AlternatingConfig,
) -> Result<RunRecord> {
    let schedule = Schedule::new(cfg.schedule.t_prime, cfg.schedule.t_l)?;
    if cfg.cycles == 0 {
        return Err(Error::InvalidArgument("cycles must be at least 1".into()));
    }
    if !(cfg.epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let Setup {
        mut posterior,
        tracked,
        policies,
        member_err,
    } = setup(plant, family, prior, oracle, cfg.planner_tol, cfg.planner_max_iter, cfg.x0)?;
    let m = plant.n_actions();
    let mut action_rng = substream(cfg.seed, ACTION_STREAM);
    let mut plant_rng = substream(cfg.seed, TRANSITION_STREAM);
    let mut record = RunRecord::with_capacity(schedule.t_prime * cfg.cycles);
    let mut state = plant.start(cfg.x0)?;
    let mut exploited: Option<usize> = None;
    let mut last_change = 0usize;

    for cycle in 0..cfg.cycles {
        for _ in 0..schedule.t_l {
            let u = action_rng.gen_range(0..m);
            let (c, next) = plant.step(state, u, &mut plant_rng);
            absorb(&mut posterior, family, (state.index, u, next.index))
                .map_err(|e| e.at_cycle(cycle))?;
            let err = exploited.and_then(|j| member_err.as_ref().map(|e| e[j]));
            record.push(state.index, u, c, true, err, Some(posterior.map_index), Some(cycle));
            record.posterior_mass.push(tracked_mass(&posterior, tracked));
            state = next;
        }
        let map = posterior.map_index;
        if cycle == 0 {
            let mut far = Vec::new();
            for j in 0..family.len() {
                if uniform_bl_distance(family.member(map), family.member(j), states)?.value
                    > cfg.epsilon
                {
                    far.push(j);
                }
            }
            posterior.eliminate(&far).map_err(|e| e.at_cycle(cycle))?;
        }
        if exploited != Some(map) {
            last_change = record.len();
        }
        exploited = Some(map);
        let policy = &policies[map];
        let err = member_err.as_ref().map(|e| e[map]);
        let mut exploit_cost = 0.0;
        for _ in 0..schedule.t_a() {
            let u = policy[state.index];
            let (c, next) = plant.step(state, u, &mut plant_rng);
            if cfg.absorb_exploit_data {
                absorb(&mut posterior, family, (state.index, u, next.index))
                    .map_err(|e| e.at_cycle(cycle))?;
            }
            exploit_cost += c;
            record.push(state.index, u, c, false, err, Some(map), Some(cycle));
            record.posterior_mass.push(tracked_mass(&posterior, tracked));
            state = next;
        }
        record.cycles.push(CycleStat {
            cycle,
            map_index: map,
            exploit_avg_cost: exploit_cost / schedule.t_a() as f64,
            cumulative_avg_cost: record.final_avg_cost(),
        });
    }
    record.finish("alternating", cfg.seed, j_star, schedule.t_prime, Some(last_change));
    Ok(record)
}

/// Simultaneous strategy: at every step explore with probability `1/(1+k)²`,
/// `k` the number of MAP changes so far, else apply the policy fixed at the
/// start of the current phase. Phase `i` ends once the heaviest posterior bin
/// reaches `1 − 2^{−i}`; the next phase exploits the then-current MAP.
pub fn run_simultaneous(
    plant: &Plant,
    family: &CandidateFamily,
    prior: &[f64],
    oracle: Option<&FiniteKernel>,
    j_star: Option<f64>,
    cfg: &SimultaneousConfig,
) -> Result<RunRecord> {
    if cfg.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let Setup {
        mut posterior,
        tracked,
        policies,
        member_err,
    } = setup(plant, family, prior, oracle, cfg.planner_tol, cfg.planner_max_iter, cfg.x0)?;
    let m = plant.n_actions();
    let mut coin_rng = substream(cfg.seed, COIN_STREAM);
    let mut action_rng = substream(cfg.seed, ACTION_STREAM);
    let mut plant_rng = substream(cfg.seed, TRANSITION_STREAM);
    let mut record = RunRecord::with_capacity(cfg.horizon);
    record.k_trace.reserve(cfg.horizon);
    let mut sim = SimulState {
        phase_index: 1,
        map_change_count: 0,
    };
    let mut exploited = posterior.map_index;
    record.phases.push(PhaseStart { phase: 1, t: 0 });
    let mut last_map_change = 0usize;
    let mut state = plant.start(cfg.x0)?;

    for t in 0..cfg.horizon {
        sim.map_change_count = posterior.map_change_count;
        record.k_trace.push(sim.map_change_count);
        let coin: f64 = coin_rng.gen();
        let explore = coin < sim.exploration_prob();
        let u = if explore {
            action_rng.gen_range(0..m)
        } else {
            policies[exploited][state.index]
        };
        let (c, next) = plant.step(state, u, &mut plant_rng);
        let before = posterior.map_index;
        absorb(&mut posterior, family, (state.index, u, next.index))
            .map_err(|e| e.at_step(t))?;
        if posterior.map_index != before {
            last_map_change = t + 1;
        }
        let err = member_err.as_ref().map(|e| e[exploited]);
        record.push(
            state.index,
            u,
            c,
            explore,
            err,
            Some(posterior.map_index),
            Some(sim.phase_index),
        );
        record.posterior_mass.push(tracked_mass(&posterior, tracked));
        if posterior.max_bin_weight() >= sim.threshold() {
            sim.phase_index += 1;
            exploited = posterior.map_index;
            record.phases.push(PhaseStart {
                phase: sim.phase_index,
                t: t + 1,
            });
        }
        state = next;
    }
    record.finish(
        "simultaneous",
        cfg.seed,
        j_star,
        cfg.trailing_window,
        Some(last_map_change),
    );
    Ok(record)
}
