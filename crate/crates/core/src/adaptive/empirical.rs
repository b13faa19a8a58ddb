//! Algorithm I (empirical identification) and Algorithm II (the same loop
//! behind a Dobrushin feasibility gate).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{exploration_probability, substream, Plant, ACTION_STREAM, COIN_STREAM, TRANSITION_STREAM};
use super::CountsTable;
use crate::error::{Error, Result};
use crate::metrics::{dobrushin_coefficient, l1};
use crate::models::{CostTable, FiniteKernel};
use crate::planner::{RviWorkspace, StationaryPolicy};
use crate::quantize::{extend_policy, BinPolicy, Quantizer};
use crate::record::{Checkpoint, GateDecision, RunRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmpiricalConfig {
    pub horizon: usize,
    pub seed: u64,
    /// Step counts after which the estimate is snapshotted.
    pub checkpoints: Vec<usize>,
    /// Replan every this many steps (1 replans after every transition).
    pub replan_every: usize,
    pub planner_tol: f64,
    pub planner_max_iter: usize,
    /// Initial state index.
    pub x0: usize,
    pub trailing_window: usize,
}

impl Default for EmpiricalConfig {
    fn default() -> Self {
        EmpiricalConfig {
            horizon: 1000,
            seed: 0,
            checkpoints: Vec::new(),
            replan_every: 1,
            planner_tol: 1e-9,
            planner_max_iter: 100_000,
            x0: 0,
            trailing_window: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalOutcome {
    /// Estimate after the last transition.
    pub estimate: FiniteKernel,
    pub policy: StationaryPolicy,
    pub record: RunRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Algorithm2Outcome {
    /// Last accepted estimate.
    pub estimate: FiniteKernel,
    /// Its optimal policy, constant on each state bin.
    pub policy: BinPolicy,
    pub record: RunRecord,
}

/// Runs Algorithm I: after every transition the frequency estimate is
/// recomputed (unvisited rows stay uniform) and its optimal policy is applied
/// with probability `1 − min(1, 1/t)`; otherwise a uniform action is drawn.
///
/// `oracle`, when given, is the kernel the estimate is scored against and
/// `j_star` the reference optimal cost for the summary.
pub fn run_algorithm1(
    plant: &Plant,
    oracle: Option<&FiniteKernel>,
    j_star: Option<f64>,
    cfg: &EmpiricalConfig,
) -> Result<EmpiricalOutcome> {
    let initial = FiniteKernel::uniform(plant.n_states(), plant.n_actions());
    let run = run_loop(plant, oracle, j_star, cfg, None, initial, "alg1")?;
    Ok(EmpiricalOutcome {
        estimate: run.accepted,
        policy: StationaryPolicy::Deterministic(run.policy),
        record: run.record,
    })
}

/// Runs Algorithm II: as Algorithm I, but a new estimate replaces the current
/// one only if its Dobrushin coefficient is at most `beta`.
///
/// `initial` defaults to the uniform kernel, which always passes the gate.
pub fn run_algorithm2(
    plant: &Plant,
    oracle: Option<&FiniteKernel>,
    j_star: Option<f64>,
    beta: f64,
    initial: Option<FiniteKernel>,
    cfg: &EmpiricalConfig,
) -> Result<Algorithm2Outcome> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("beta = {beta} outside [0, 1]")));
    }
    let initial =
        initial.unwrap_or_else(|| FiniteKernel::uniform(plant.n_states(), plant.n_actions()));
    if initial.n_states() != plant.n_states() || initial.n_actions() != plant.n_actions() {
        return Err(Error::ShapeMismatch("initial estimate does not match the plant".into()));
    }
    let coefficient = dobrushin_coefficient(&initial).value;
    if coefficient > beta + GATE_SLACK {
        return Err(Error::GateRejectsInitial { coefficient, beta });
    }
    let run = run_loop(plant, oracle, j_star, cfg, Some(beta), initial, "alg2")?;
    let quantizer = match plant {
        Plant::Continuous { states, .. } => states.clone(),
        Plant::Finite { .. } => Quantizer::unit_interval(plant.n_states())?,
    };
    let policy = extend_policy(&StationaryPolicy::Deterministic(run.policy), &quantizer)?;
    Ok(Algorithm2Outcome {
        estimate: run.accepted,
        policy,
        record: run.record,
    })
}

/// Tolerance on the gate comparison.
pub const GATE_SLACK: f64 = 1e-12;

struct LoopResult {
    accepted: FiniteKernel,
    policy: Vec<usize>,
    record: RunRecord,
}

fn validate_config(plant: &Plant, cfg: &EmpiricalConfig) -> Result<()> {
    plant.validate()?;
    if cfg.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if cfg.replan_every == 0 {
        return Err(Error::InvalidArgument("replan_every must be at least 1".into()));
    }
    if !(cfg.planner_tol > 0.0) {
        return Err(Error::InvalidArgument("planner_tol must be positive".into()));
    }
    if cfg.x0 >= plant.n_states() {
        return Err(Error::StateOutOfRange {
            index: cfg.x0,
            n_states: plant.n_states(),
        });
    }
    Ok(())
}

pub(crate) fn plant_cost_table(plant: &Plant) -> Result<CostTable> {
    Ok(match plant {
        Plant::Finite { cost, .. } => cost.clone(),
        Plant::Continuous {
            cost,
            states,
            actions,
            ..
        } => cost.tabulate(
            &states.centers_1d().expect("validated 1-d"),
            &actions.centers_1d().expect("validated 1-d"),
        ),
    })
}

/// Solves the estimate's ACOE from the workspace's current bias. If relative
/// value iteration stalls (a periodic estimate), the lazy kernel
/// `(I + k)/2`, which has the same optimal policies and gain, is solved instead.
pub(crate) fn plan(
    k: &FiniteKernel,
    c: &CostTable,
    ws: &mut RviWorkspace,
    tol: f64,
    max_iter: usize,
) -> Result<()> {
    match ws.solve(k, c, tol, max_iter) {
        Ok(_) => Ok(()),
        Err(Error::NotConverged { .. }) => {
            let lazy = lazy_kernel(k);
            ws.v.iter_mut().for_each(|v| *v = 0.0);
            ws.solve(&lazy, c, tol, max_iter).map(|_| ())
        }
        Err(e) => Err(e),
    }
}

fn lazy_kernel(k: &FiniteKernel) -> FiniteKernel {
    FiniteKernel::from_fn(k.n_states(), k.n_actions(), |x, u| {
        let mut row: Vec<f64> = k.row(x, u).iter().map(|p| 0.5 * p).collect();
        row[x] += 0.5;
        row
    })
    .expect("convex combination of stochastic rows")
}

/// Dobrushin coefficient of a kernel whose rows change one at a time.
struct DobrushinTracker {
    n_rows: usize,
    pair: Vec<f64>,
    row_max: Vec<f64>,
}

impl DobrushinTracker {
    fn new(k: &FiniteKernel) -> Self {
        let n_rows = k.n_rows();
        let mut pair = vec![0.0; n_rows * n_rows];
        for r in 0..n_rows {
            for s in r + 1..n_rows {
                let d = l1(k.row_flat(r), k.row_flat(s));
                pair[r * n_rows + s] = d;
                pair[s * n_rows + r] = d;
            }
        }
        let row_max = (0..n_rows)
            .map(|r| pair[r * n_rows..(r + 1) * n_rows].iter().copied().fold(0.0, f64::max))
            .collect();
        DobrushinTracker {
            n_rows,
            pair,
            row_max,
        }
    }

    fn update(&mut self, k: &FiniteKernel, r: usize) {
        let n = self.n_rows;
        let mut rmax: f64 = 0.0;
        for s in 0..n {
            if s == r {
                continue;
            }
            let d = l1(k.row_flat(r), k.row_flat(s));
            let old = self.pair[s * n + r];
            self.pair[r * n + s] = d;
            self.pair[s * n + r] = d;
            rmax = rmax.max(d);
            if d >= self.row_max[s] {
                self.row_max[s] = d;
            } else if old == self.row_max[s] {
                self.row_max[s] = self.pair[s * n..(s + 1) * n].iter().copied().fold(0.0, f64::max);
            }
        }
        self.row_max[r] = rmax;
    }

    fn coefficient(&self) -> f64 {
        0.5 * self.row_max.iter().copied().fold(0.0, f64::max)
    }
}

fn max_row_err(errs: &[f64]) -> f64 {
    errs.iter().copied().fold(0.0, f64::max)
}

fn run_loop(
    plant: &Plant,
    oracle: Option<&FiniteKernel>,
    j_star: Option<f64>,
    cfg: &EmpiricalConfig,
    beta: Option<f64>,
    initial: FiniteKernel,
    label: &str,
) -> Result<LoopResult> {
    validate_config(plant, cfg)?;
    if let Some(o) = oracle {
        if o.n_states() != plant.n_states() || o.n_actions() != plant.n_actions() {
            return Err(Error::ShapeMismatch("oracle kernel does not match the plant".into()));
        }
    }
    let (n, m) = (plant.n_states(), plant.n_actions());
    let cost = plant_cost_table(plant)?;
    let mut coin_rng = substream(cfg.seed, COIN_STREAM);
    let mut action_rng = substream(cfg.seed, ACTION_STREAM);
    let mut plant_rng = substream(cfg.seed, TRANSITION_STREAM);

    let mut counts = CountsTable::new(n, m);
    // raw estimate Q_t; unvisited rows keep the initial estimate's rows
    let mut raw = initial.clone();
    let mut accepted = initial;
    let mut tracker = beta.map(|_| DobrushinTracker::new(&raw));
    let mut raw_errs: Option<Vec<f64>> = oracle.map(|o| {
        (0..raw.n_rows()).map(|r| l1(raw.row_flat(r), o.row_flat(r))).collect()
    });
    let mut accepted_err = raw_errs.as_deref().map(max_row_err);

    let mut ws = RviWorkspace::new(n);
    plan(&accepted, &cost, &mut ws, cfg.planner_tol, cfg.planner_max_iter).map_err(|e| e.at_step(0))?;
    let mut policy = ws.policy.clone();
    let mut stale = false;
    let mut last_policy_change = 0usize;

    let mut record = RunRecord::with_capacity(cfg.horizon);
    let mut checkpoints: Vec<usize> = cfg.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let mut next_checkpoint = checkpoints.iter().peekable();

    let mut state = plant.start(cfg.x0)?;
    for t in 0..cfg.horizon {
        let (explore, action) = if t == 0 {
            (false, policy[state.index])
        } else {
            let coin: f64 = coin_rng.gen();
            if coin < exploration_probability(t) {
                (true, action_rng.gen_range(0..m))
            } else {
                (false, policy[state.index])
            }
        };
        let (c, next) = plant.step(state, action, &mut plant_rng);
        counts.record(state.index, action, next.index)?;
        let r = state.index * m + action;
        let row = counts.row_estimate(state.index, action).expect("just visited");
        raw.set_row(state.index, action, &row).map_err(|e| e.at_step(t))?;
        if let (Some(errs), Some(o)) = (raw_errs.as_mut(), oracle) {
            errs[r] = l1(raw.row_flat(r), o.row_flat(r));
        }
        match (beta, tracker.as_mut()) {
            (Some(b), Some(tr)) => {
                tr.update(&raw, r);
                let coefficient = tr.coefficient();
                let ok = coefficient <= b + GATE_SLACK;
                record.gate.push(GateDecision {
                    t: t + 1,
                    coefficient,
                    accepted: ok,
                });
                if ok {
                    accepted.clone_from(&raw);
                    accepted_err = raw_errs.as_deref().map(max_row_err);
                    stale = true;
                }
            }
            _ => {
                accepted.set_row(state.index, action, &row).map_err(|e| e.at_step(t))?;
                accepted_err = raw_errs.as_deref().map(max_row_err);
                stale = true;
            }
        }
        record.push(state.index, action, c, explore, accepted_err, None, None);

        if stale && (t + 1) % cfg.replan_every == 0 {
            plan(&accepted, &cost, &mut ws, cfg.planner_tol, cfg.planner_max_iter)
                .map_err(|e| e.at_step(t + 1))?;
            stale = false;
            if ws.policy != policy {
                policy.clone_from(&ws.policy);
                last_policy_change = t + 1;
            }
        }
        while let Some(&&cp) = next_checkpoint.peek() {
            if cp > t + 1 {
                break;
            }
            if cp == t + 1 {
                record.checkpoints.push(Checkpoint {
                    t: cp,
                    est_err_tv: accepted_err,
                    kernel: accepted.clone(),
                });
            }
            next_checkpoint.next();
        }
        state = next;
    }
    debug_assert!(counts.is_consistent());
    record.finish(label, cfg.seed, j_star, cfg.trailing_window, Some(last_policy_change));
    Ok(LoopResult {
        accepted,
        policy,
        record,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ContinuousModel, CostModel};
    use crate::quantize::{build_quantized_kernel, KernelMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bench_plant(n: usize) -> (Plant, FiniteKernel) {
        let q = Quantizer::unit_interval(n).unwrap();
        let mdp = build_quantized_kernel(
            &ContinuousModel::benchmark(),
            &CostModel::default(),
            &q,
            &q,
            KernelMode::Exact,
        )
        .unwrap();
        (
            Plant::Finite {
                kernel: mdp.kernel.clone(),
                cost: mdp.cost,
            },
            mdp.kernel,
        )
    }

    fn cfg(horizon: usize, seed: u64) -> EmpiricalConfig {
        EmpiricalConfig {
            horizon,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn single_step_applies_initial_policy() {
        let (plant, _) = bench_plant(4);
        let out = run_algorithm1(&plant, None, None, &cfg(1, 3)).unwrap();
        assert_eq!(out.record.len(), 1);
        assert_eq!(out.record.rows[0].explore_flag, 0);
        let mut ws = RviWorkspace::new(4);
        let cost = plant_cost_table(&plant).unwrap();
        ws.solve(&FiniteKernel::uniform(4, 4), &cost, 1e-9, 1000).unwrap();
        assert_eq!(out.record.rows[0].action, ws.policy[0]);
    }

    #[test]
    fn runs_are_reproducible() {
        let (plant, oracle) = bench_plant(4);
        let a = run_algorithm1(&plant, Some(&oracle), None, &cfg(500, 11)).unwrap();
        let b = run_algorithm1(&plant, Some(&oracle), None, &cfg(500, 11)).unwrap();
        assert_eq!(a.record.rows, b.record.rows);
        let c = run_algorithm1(&plant, Some(&oracle), None, &cfg(500, 12)).unwrap();
        assert_ne!(a.record.rows, c.record.rows);
    }

    #[test]
    fn exploration_flags_match_coin_replay() {
        let (plant, _) = bench_plant(4);
        let out = run_algorithm1(&plant, None, None, &cfg(2000, 5)).unwrap();
        let mut coins = substream(5, COIN_STREAM);
        assert_eq!(out.record.rows[0].explore_flag, 0);
        for row in &out.record.rows[1..] {
            let coin: f64 = coins.gen();
            let expect = coin < exploration_probability(row.t);
            assert_eq!(row.explore_flag == 1, expect, "t = {}", row.t);
        }
        assert_eq!(out.record.rows[1].explore_flag, 1);
    }

    #[test]
    fn open_gate_reproduces_algorithm1() {
        let (plant, oracle) = bench_plant(4);
        let c = cfg(1500, 8);
        let a1 = run_algorithm1(&plant, Some(&oracle), None, &c).unwrap();
        let a2 = run_algorithm2(&plant, Some(&oracle), None, 1.0, None, &c).unwrap();
        assert_eq!(a1.record.rows, a2.record.rows);
        assert!(a2.record.gate.iter().all(|g| g.accepted));
        assert_eq!(a1.estimate, a2.estimate);
    }

    #[test]
    fn gate_rejects_disjoint_rows_and_keeps_previous() {
        let (plant, oracle) = bench_plant(4);
        let out = run_algorithm2(&plant, Some(&oracle), None, 0.7, None, &cfg(3000, 2)).unwrap();
        // early single-visit rows are point masses; disjoint pairs must be rejected
        for g in &out.record.gate {
            if g.accepted {
                assert!(g.coefficient <= 0.7 + GATE_SLACK);
            }
        }
        assert!(out.record.gate.iter().any(|g| !g.accepted));
        assert!(dobrushin_coefficient(&out.estimate).value <= 0.7 + GATE_SLACK);

        let disjoint = FiniteKernel::from_fn(4, 4, |x, _| {
            let mut r = vec![0.0; 4];
            r[x] = 1.0;
            r
        })
        .unwrap();
        assert!(matches!(
            run_algorithm2(&plant, None, None, 0.7, Some(disjoint), &cfg(10, 1)),
            Err(Error::GateRejectsInitial { .. })
        ));
    }

    #[test]
    fn tracker_matches_full_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut k = FiniteKernel::uniform(5, 3);
        let mut tr = DobrushinTracker::new(&k);
        for _ in 0..300 {
            let (x, u) = (rng.gen_range(0..5), rng.gen_range(0..3));
            let mut row = vec![0.0; 5];
            if rng.gen_bool(0.3) {
                row[rng.gen_range(0..5)] = 1.0;
            } else {
                let raw: Vec<f64> = (0..5).map(|_| rng.gen::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                row = raw.into_iter().map(|v| v / s).collect();
            }
            k.set_row(x, u, &row).unwrap();
            tr.update(&k, x * 3 + u);
            let full = dobrushin_coefficient(&k).value;
            assert!((tr.coefficient() - full).abs() < 1e-14);
        }
    }

    #[test]
    fn checkpoints_and_counts() {
        let (plant, oracle) = bench_plant(4);
        let mut c = cfg(2000, 1);
        c.checkpoints = vec![2000, 100, 1000];
        let out = run_algorithm1(&plant, Some(&oracle), None, &c).unwrap();
        let ts: Vec<usize> = out.record.checkpoints.iter().map(|cp| cp.t).collect();
        assert_eq!(ts, vec![100, 1000, 2000]);
        let last = out.record.checkpoints.last().unwrap();
        assert_eq!(last.kernel, out.estimate);
        let direct = (0..16)
            .map(|r| l1(out.estimate.row_flat(r), oracle.row_flat(r)))
            .fold(0.0, f64::max);
        assert_eq!(last.est_err_tv, Some(direct));
    }

    #[test]
    fn replan_cadence_option() {
        let (plant, oracle) = bench_plant(4);
        let mut c = cfg(1000, 6);
        c.replan_every = 50;
        let out = run_algorithm1(&plant, Some(&oracle), None, &c).unwrap();
        assert_eq!(out.record.len(), 1000);
    }

    #[test]
    fn lazy_kernel_keeps_optimal_policy() {
        let (plant, _) = bench_plant(4);
        let Plant::Finite { kernel, cost } = &plant else { unreachable!() };
        let mut a = RviWorkspace::new(4);
        a.solve(kernel, cost, 1e-11, 10_000).unwrap();
        let mut b = RviWorkspace::new(4);
        let r = b.solve(&lazy_kernel(kernel), cost, 1e-11, 10_000).unwrap();
        assert_eq!(a.policy, b.policy);
        let mut c = RviWorkspace::new(4);
        let r0 = c.solve(kernel, cost, 1e-11, 10_000).unwrap();
        assert!((r.j_star - r0.j_star).abs() < 1e-9);
    }

    #[test]
    fn continuous_plant_runs() {
        let q = Quantizer::unit_interval(4).unwrap();
        let plant = Plant::Continuous {
            model: ContinuousModel::benchmark(),
            cost: CostModel::default(),
            states: q.clone(),
            actions: q,
        };
        let out = run_algorithm2(&plant, None, None, 0.9, None, &cfg(500, 3)).unwrap();
        assert_eq!(out.record.len(), 500);
        assert!(out.policy.action(&[0.2]).is_some());
    }
}
