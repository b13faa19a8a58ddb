//! Seeded batch execution of an experiment config.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, FamilySpec, ModelSpec, PlantKind, Strategy};
use super::plot::{emit_plot_data, PlotData, TraceKind, PLOT_POINTS};
use crate::adaptive::{
    run_algorithm1, run_algorithm2, run_alternating, run_identification, run_simultaneous,
    AlternatingConfig, EmpiricalConfig, Plant, Schedule, SimultaneousConfig, GATE_SLACK,
};
use crate::error::{Error, Result};
use crate::models::{
    CandidateFamily, ContinuousModel, CostTable, FiniteKernel, FiniteSpace, LineMetric,
};
use crate::planner::relative_value_iteration;
use crate::quantize::{build_quantized_kernel, Quantizer};
use crate::record::RunRecord;

/// Everything a run needs that does not depend on the seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub plant: Plant,
    /// Kernel the estimates are scored against (`P_n` or the finite model).
    pub oracle: FiniteKernel,
    pub cost: CostTable,
    pub j_star: f64,
    pub c_max: f64,
    pub family: Option<CandidateFamily>,
    pub prior: Option<Vec<f64>>,
    /// State points used for BL distances between family members.
    pub states: FiniteSpace,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (n, m) = cfg.dims();
    let (oracle, cost, plant, states) = match &cfg.model {
        ModelSpec::Finite {
            n_states,
            n_actions,
            kernel,
            cost,
            c_max,
        } => {
            let k = FiniteKernel::new(*n_states, *n_actions, kernel.clone())?;
            let c = CostTable::new(*n_states, *n_actions, cost.clone(), *c_max)?;
            let plant = Plant::Finite {
                kernel: k.clone(),
                cost: c.clone(),
            };
            let states = FiniteSpace::unit_interval_centers(*n_states, LineMetric::Euclidean)?;
            (k, c, plant, states)
        }
        ModelSpec::Continuous { a, b, p_full, sigma } => {
            let model = ContinuousModel::new(*a, *b, *p_full, *sigma)?;
            let qs = Quantizer::unit_interval(n)?;
            let qa = Quantizer::unit_interval(m)?;
            let mdp = build_quantized_kernel(&model, &cfg.cost, &qs, &qa, cfg.kernel_mode())?;
            let plant = match cfg.plant {
                PlantKind::Quantized => Plant::Finite {
                    kernel: mdp.kernel.clone(),
                    cost: mdp.cost.clone(),
                },
                PlantKind::Continuous => Plant::Continuous {
                    model,
                    cost: cfg.cost,
                    states: qs.clone(),
                    actions: qa,
                },
            };
            let states = qs.space(LineMetric::Euclidean)?;
            (mdp.kernel, mdp.cost, plant, states)
        }
    };
    let j_star = relative_value_iteration(
        &oracle,
        &cost,
        cfg.tolerances.planner,
        cfg.tolerances.planner_max_iter,
    )?
    .j_star;
    let family = cfg.family.as_ref().map(|f| build_family(cfg, f)).transpose()?;
    Ok(Prepared {
        c_max: cost.c_max(),
        plant,
        oracle,
        cost,
        j_star,
        family,
        prior: cfg.prior.clone(),
        states,
    })
}

fn build_family(cfg: &ExperimentConfig, spec: &FamilySpec) -> Result<CandidateFamily> {
    let (n, m) = cfg.dims();
    match spec {
        FamilySpec::BSweep { b_values, true_index } => {
            let ModelSpec::Continuous { a, p_full, sigma, .. } = cfg.model else {
                return Err(Error::config("family", "b_sweep needs a continuous model"));
            };
            let qs = Quantizer::unit_interval(n)?;
            let qa = Quantizer::unit_interval(m)?;
            let members = b_values
                .iter()
                .map(|&b| {
                    let model = ContinuousModel::new(a, b, p_full, sigma)?;
                    Ok(build_quantized_kernel(&model, &cfg.cost, &qs, &qa, cfg.kernel_mode())?.kernel)
                })
                .collect::<Result<Vec<_>>>()?;
            let labels = b_values.iter().map(|b| format!("b={b}")).collect();
            CandidateFamily::new(members, labels, *true_index)
        }
        FamilySpec::Explicit {
            kernels,
            labels,
            true_index,
        } => {
            let members = kernels
                .iter()
                .map(|k| FiniteKernel::new(n, m, k.clone()))
                .collect::<Result<Vec<_>>>()?;
            let labels = if labels.is_empty() {
                (0..members.len()).map(|i| format!("M{i}")).collect()
            } else {
                labels.clone()
            };
            CandidateFamily::new(members, labels, *true_index)
        }
    }
}

/// Runs one seed of the configured strategy.
pub fn run_seed(cfg: &ExperimentConfig, prep: &Prepared, seed: u64) -> Result<RunRecord> {
    let tol = &cfg.tolerances;
    let family = || {
        prep.family
            .as_ref()
            .ok_or_else(|| Error::config("family", "missing candidate family"))
    };
    let prior = |f: &CandidateFamily| {
        prep.prior
            .clone()
            .unwrap_or_else(|| vec![1.0 / f.len() as f64; f.len()])
    };
    let empirical = EmpiricalConfig {
        horizon: cfg.horizon,
        seed,
        checkpoints: cfg.checkpoints.clone(),
        replan_every: cfg.params.replan_every,
        planner_tol: tol.planner,
        planner_max_iter: tol.planner_max_iter,
        x0: 0,
        trailing_window: tol.trailing_window,
    };
    match cfg.strategy {
        Strategy::Alg1 => {
            Ok(run_algorithm1(&prep.plant, Some(&prep.oracle), Some(prep.j_star), &empirical)?.record)
        }
        Strategy::Alg2 => Ok(run_algorithm2(
            &prep.plant,
            Some(&prep.oracle),
            Some(prep.j_star),
            cfg.params.beta,
            None,
            &empirical,
        )?
        .record),
        Strategy::Alternating => {
            let f = family()?;
            let p = &cfg.params;
            let schedule = match p.t_l {
                Some(t_l) => Schedule::new(p.t_prime, t_l)?,
                None => Schedule::with_default_exploration(p.t_prime)?,
            };
            let cycles = p.cycles.unwrap_or(cfg.horizon / p.t_prime);
            let mut alt = AlternatingConfig::new(schedule, cycles, p.epsilon, seed);
            alt.absorb_exploit_data = p.absorb_exploit_data;
            alt.planner_tol = tol.planner;
            alt.planner_max_iter = tol.planner_max_iter;
            run_alternating(
                &prep.plant,
                f,
                &prior(f),
                &prep.states,
                Some(&prep.oracle),
                Some(prep.j_star),
                &alt,
            )
        }
        Strategy::Simultaneous => {
            let f = family()?;
            let mut sim = SimultaneousConfig::new(cfg.horizon, seed);
            sim.planner_tol = tol.planner;
            sim.planner_max_iter = tol.planner_max_iter;
            sim.trailing_window = tol.trailing_window;
            run_simultaneous(
                &prep.plant,
                f,
                &prior(f),
                Some(&prep.oracle),
                Some(prep.j_star),
                &sim,
            )
        }
        Strategy::Identify => {
            let f = family()?;
            run_identification(&prep.plant, f, &prior(f), cfg.horizon, seed)
        }
    }
}

/// Per-seed line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Cost gap to `j*`: trailing-window mean for Algorithm II, cumulative
    /// average otherwise.
    pub final_gap: Option<f64>,
    /// Quantity compared against the tolerance.
    pub score: Option<f64>,
    pub stabilization_step: Option<usize>,
    pub pass: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub strategy: String,
    pub j_star: f64,
    pub c_max: f64,
    pub runs: Vec<SeedOutcome>,
    pub passed: usize,
    pub required: usize,
    pub pass: bool,
    pub output_dir: PathBuf,
}

/// Scores a finished run against the configured tolerance.
pub fn evaluate(cfg: &ExperimentConfig, prep: &Prepared, seed: u64, rec: &RunRecord) -> SeedOutcome {
    let tol = &cfg.tolerances;
    let gap_tol = tol.gap * prep.c_max;
    let summary = rec.summary.as_ref();
    let stabilization_step = summary.and_then(|s| s.stabilization_step);
    let cumulative = rec.final_avg_cost() - prep.j_star;
    let trailing = rec.trailing_avg_cost(tol.trailing_window) - prep.j_star;
    let (final_gap, score, pass) = match cfg.strategy {
        Strategy::Alg1 => {
            let err = rec.rows.last().and_then(|r| r.est_err_tv);
            (Some(cumulative), err, err.is_some_and(|e| e <= tol.est_err))
        }
        Strategy::Alg2 => {
            let audited = rec
                .gate
                .iter()
                .all(|g| !g.accepted || g.coefficient <= cfg.params.beta + GATE_SLACK);
            (Some(trailing), Some(trailing), audited && trailing <= gap_tol)
        }
        Strategy::Alternating | Strategy::Simultaneous => {
            (Some(cumulative), Some(cumulative), cumulative <= gap_tol)
        }
        Strategy::Identify => {
            let mass = rec.posterior_mass.last().copied();
            let stable = stabilization_step
                .is_some_and(|s| s + tol.trailing_window <= rec.len());
            (None, mass, stable && mass.is_some_and(|m| m >= tol.posterior_mass))
        }
    };
    SeedOutcome {
        seed,
        final_gap,
        score,
        stabilization_step,
        pass,
        error: None,
    }
}

/// Minimum number of passing seeds.
pub fn required_passes(n_seeds: usize, fraction: f64) -> usize {
    // 0.9 · 20 must give 18, not 19
    ((n_seeds as f64 * fraction) - 1e-9).ceil().max(0.0) as usize
}

fn stem(cfg: &ExperimentConfig, seed: u64) -> String {
    format!("{}_seed{seed}", cfg.strategy.name())
}

fn write_run_files(cfg: &ExperimentConfig, dir: &Path, seed: u64, rec: &RunRecord) -> Result<()> {
    let stem = stem(cfg, seed);
    rec.write_csv_file(&dir.join(format!("{stem}.csv")))?;
    if !rec.checkpoints.is_empty() {
        let f = fs::File::create(dir.join(format!("{stem}_checkpoints.json")))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), &rec.checkpoints)?;
    }
    if !rec.posterior_mass.is_empty() {
        let mut w = csv::Writer::from_path(dir.join(format!("{stem}_posterior.csv")))?;
        w.write_record(["t", "posterior_mass"])?;
        for (t, m) in rec.posterior_mass.iter().enumerate() {
            w.write_record([t.to_string(), m.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Runs every seed in parallel, writing per-run files, `summary.csv`,
/// `summary.json` and plot data into the output directory. A failing run is
/// recorded in the summary and counts as a failed seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    run_prepared(cfg, &prep)
}

/// [`run_experiment`] with the seed-independent setup already built.
pub fn run_prepared(cfg: &ExperimentConfig, prep: &Prepared) -> Result<ExperimentReport> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;

    let results: Vec<(SeedOutcome, Option<RunRecord>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = run_seed(cfg, prep, seed)
                .and_then(|rec| write_run_files(cfg, &dir, seed, &rec).map(|_| rec));
            match run {
                Ok(rec) => (evaluate(cfg, prep, seed, &rec), Some(rec.thin(PLOT_POINTS))),
                Err(e) => {
                    log::warn!("seed {seed} failed: {e}");
                    let outcome = SeedOutcome {
                        seed,
                        final_gap: None,
                        score: None,
                        stabilization_step: None,
                        pass: false,
                        error: Some(e.to_string()),
                    };
                    (outcome, None)
                }
            }
        })
        .collect();

    let (runs, records): (Vec<SeedOutcome>, Vec<Option<RunRecord>>) = results.into_iter().unzip();
    let records: Vec<RunRecord> = records.into_iter().flatten().collect();
    let passed = runs.iter().filter(|r| r.pass).count();
    let required = required_passes(runs.len(), cfg.tolerances.pass_fraction);
    let report = ExperimentReport {
        strategy: cfg.strategy.name().to_string(),
        j_star: prep.j_star,
        c_max: prep.c_max,
        passed,
        required,
        pass: passed >= required,
        runs,
        output_dir: dir.clone(),
    };
    write_summary(&report, &dir)?;
    if !records.is_empty() {
        for kind in [TraceKind::CostTrace, TraceKind::EstErr, TraceKind::PosteriorMass] {
            emit_plot_data(&PlotData::Runs { kind, records: &records }, &dir)?;
        }
    }
    Ok(report)
}

fn write_summary(report: &ExperimentReport, dir: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    for r in &report.runs {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut f = std::io::BufWriter::new(fs::File::create(dir.join("summary.json"))?);
    serde_json::to_writer_pretty(&mut f, report)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Recomputes each run's average cost from its step CSV and compares it
/// with the stored running mean. Returns the largest deviation.
pub fn audit_step_csvs(cfg: &ExperimentConfig, dir: &Path) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &seed in &cfg.seeds {
        let path = dir.join(format!("{}.csv", stem(cfg, seed)));
        if !path.exists() {
            continue;
        }
        let rows = crate::record::read_step_csv(&path)?;
        let mut sum = 0.0;
        for (i, r) in rows.iter().enumerate() {
            sum += r.cost;
            worst = worst.max((sum / (i + 1) as f64 - r.avg_cost).abs());
        }
    }
    Ok(worst)
}
