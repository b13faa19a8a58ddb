use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use borel_adapt::harness::bench::quantization_trend;
use borel_adapt::harness::config::{
    load_config, ExperimentConfig, ModelSpec, QuantizationMode, Strategy,
};
use borel_adapt::harness::plot::{emit_plot_data, PlotData, TraceKind};
use borel_adapt::harness::weights::{read_trajectory, write_posterior_weights};
use borel_adapt::harness::run::{audit_step_csvs, prepare, required_passes, run_experiment, SeedOutcome};
use borel_adapt::metrics::{dobrushin_coefficient, uniform_bl_distance, uniform_tv_distance};
use borel_adapt::models::ContinuousModel;
use borel_adapt::planner::relative_value_iteration;
use borel_adapt::record::{read_step_csv, RunRecord};
use borel_adapt::Error;

const THREADS_VAR: &str = "BOREL_ADAPT_THREADS";

#[derive(Parser)]
#[command(name = "borel-adapt", version, about = "Adaptive control of average-cost MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Added to every seed in the config.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BayesArgs {
    #[command(flatten)]
    common: Common,
    /// Trajectory CSV with `state` and `action` columns. Without it, one
    /// uniform-exploration trajectory per seed is simulated first.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Overrides the config's strategy.
    #[arg(long, value_parser = ["alg1", "alg2", "alternating", "simultaneous", "identify"])]
    strategy: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the optimality equation of the (quantized) model.
    Solve(Common),
    /// Build the quantized kernel and write it as JSON.
    Quantize(Common),
    /// Dobrushin coefficient and pairwise family distances, as JSON lines.
    Metrics(Common),
    /// Posterior weights of the candidate family along a trajectory.
    Bayes(BayesArgs),
    /// Run the configured strategy over all seeds.
    Run(RunArgs),
    /// Audit the step CSVs of a finished run and emit plot data.
    Report(Common),
}

enum Failure {
    Config(Error),
    Runtime(Error),
    Acceptance,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    env_logger::init();
    if let Ok(n) = std::env::var(THREADS_VAR) {
        match n.parse::<usize>() {
            Ok(n) => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("cannot set thread count: {e}");
                }
            }
            Err(_) => {
                eprintln!("error: {THREADS_VAR} must be a nonnegative integer, got {n:?}");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Acceptance) => ExitCode::from(1),
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = load_config(&common.config).map_err(Failure::Config)?;
    for s in &mut cfg.seeds {
        *s = s.checked_add(common.seed_offset).ok_or_else(|| {
            Failure::Config(Error::Config {
                path: "seeds".into(),
                message: "seed offset overflows".into(),
            })
        })?;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate().map_err(Failure::Config)?;
    Ok(cfg)
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(dir.join(name), text + "\n").map_err(Error::from)?;
    Ok(())
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve(c) => solve(&load(&c)?),
        Command::Quantize(c) => quantize(&load(&c)?),
        Command::Metrics(c) => metrics(&load(&c)?),
        Command::Bayes(a) => bayes(&a),
        Command::Run(a) => {
            let mut cfg = load(&a.common)?;
            if let Some(s) = &a.strategy {
                cfg.strategy = serde_json::from_value(json!(s)).map_err(|e| Failure::Config(e.into()))?;
                cfg.validate().map_err(Failure::Config)?;
            }
            run(&cfg)
        }
        Command::Report(c) => report(&load(&c)?),
    }
}

fn solve(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let prep = prepare(cfg)?;
    let sol = relative_value_iteration(
        &prep.oracle,
        &prep.cost,
        cfg.tolerances.planner,
        cfg.tolerances.planner_max_iter,
    )?;
    println!("j* = {}  policy = {:?}", sol.j_star, sol.policy);
    write_json(&cfg.output_dir, "solution.json", &json!(sol))
}

fn quantize(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let prep = prepare(cfg)?;
    let (n, m) = cfg.dims();
    let q = &cfg.quantization;
    let (samples, seed) = match q.mode {
        QuantizationMode::Exact => (None, None),
        QuantizationMode::MonteCarlo => (Some(q.samples), Some(q.seed)),
    };
    let value = json!({
        "n_states": n,
        "n_actions": m,
        "mode": q.mode,
        "samples": samples,
        "seed": seed,
        "kernel": prep.oracle.data(),
        "cost": prep.cost.values(),
    });
    println!(
        "{n} states x {m} actions, dobrushin coefficient {}",
        dobrushin_coefficient(&prep.oracle).value
    );
    write_json(&cfg.output_dir, "quantized.json", &value)
}

fn metrics(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let prep = prepare(cfg)?;
    let mut lines = vec![json!({
        "metric": "dobrushin",
        "report": dobrushin_coefficient(&prep.oracle),
    })];
    if let Some(f) = &prep.family {
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                let bl = uniform_bl_distance(f.member(i), f.member(j), &prep.states)?;
                let tv = uniform_tv_distance(f.member(i), f.member(j))?;
                lines.push(json!({ "metric": "uniform_bl", "i": i, "j": j, "report": bl }));
                lines.push(json!({ "metric": "uniform_tv", "i": i, "j": j, "report": tv }));
            }
        }
    }
    let mut text = String::new();
    for l in &lines {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    print!("{text}");
    std::fs::create_dir_all(&cfg.output_dir).map_err(Error::from)?;
    std::fs::write(cfg.output_dir.join("metrics.jsonl"), text).map_err(Error::from)?;
    Ok(())
}

fn bayes(args: &BayesArgs) -> Result<(), Failure> {
    let mut cfg = load(&args.common)?;
    if cfg.family.is_none() {
        return Err(Failure::Config(Error::Config {
            path: "family".into(),
            message: "bayes needs a candidate family".into(),
        }));
    }
    let prep = prepare(&cfg)?;
    let family = prep.family.as_ref().expect("checked above");
    let prior = prep
        .prior
        .clone()
        .unwrap_or_else(|| vec![1.0 / family.len() as f64; family.len()]);
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    let trajectories: Vec<(String, PathBuf)> = match &args.trajectory {
        Some(path) => vec![("weights.csv".into(), path.clone())],
        None => {
            cfg.strategy = Strategy::Identify;
            let report = run_experiment(&cfg)?;
            report
                .runs
                .iter()
                .filter(|r| r.error.is_none())
                .map(|r| {
                    (
                        format!("identify_seed{}_weights.csv", r.seed),
                        dir.join(format!("identify_seed{}.csv", r.seed)),
                    )
                })
                .collect()
        }
    };
    for (name, path) in trajectories {
        let traj = read_trajectory(&path)?;
        let out = std::io::BufWriter::new(std::fs::File::create(dir.join(&name)).map_err(Error::from)?);
        let state = write_posterior_weights(family, &prior, &traj, out)?;
        println!(
            "{name}: {} transitions, MAP {} ({}), {} MAP changes, weights {:?}",
            state.history_length,
            state.map_index,
            family.labels()[state.map_index],
            state.map_change_count,
            state.weights
        );
    }
    Ok(())
}

fn run(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let report = run_experiment(cfg)?;
    for r in &report.runs {
        let status = if r.pass { "PASS" } else { "FAIL" };
        match &r.error {
            Some(e) => println!("seed {:>6}  {status}  error: {e}", r.seed),
            None => println!(
                "seed {:>6}  {status}  gap {}  score {}",
                r.seed,
                fmt_opt(r.final_gap),
                fmt_opt(r.score)
            ),
        }
    }
    println!(
        "{}: {}/{} seeds pass (need {}), j* = {}",
        report.strategy,
        report.passed,
        report.runs.len(),
        report.required,
        report.j_star
    );
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Acceptance)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

fn report(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let dir = &cfg.output_dir;
    let deviation = audit_step_csvs(cfg, dir)?;
    println!("max |avg_cost - recomputed mean| = {deviation:e}");

    let mut records = Vec::new();
    for &seed in &cfg.seeds {
        let stem = format!("{}_seed{seed}", cfg.strategy.name());
        let path = dir.join(format!("{stem}.csv"));
        if !path.exists() {
            continue;
        }
        let mut rec = RunRecord::from_rows(read_step_csv(&path)?);
        let posterior = dir.join(format!("{stem}_posterior.csv"));
        if posterior.exists() {
            let mut r = csv::Reader::from_path(&posterior).map_err(Error::from)?;
            for row in r.deserialize::<(usize, f64)>() {
                rec.posterior_mass.push(row.map_err(Error::from)?.1);
            }
        }
        rec.finish(cfg.strategy.name(), seed, None, cfg.tolerances.trailing_window, None);
        records.push(rec);
    }
    for kind in [TraceKind::CostTrace, TraceKind::EstErr, TraceKind::PosteriorMass] {
        for p in emit_plot_data(&PlotData::Runs { kind, records: &records }, dir)? {
            println!("wrote {}", p.display());
        }
    }
    if let ModelSpec::Continuous { a, b, p_full, sigma } = cfg.model {
        let model = ContinuousModel::new(a, b, p_full, sigma)?;
        let points = quantization_trend(
            &model,
            &cfg.cost,
            &[5, 10, 20, 40],
            80,
            Some(cfg.quantization.n_actions),
            cfg.tolerances.planner,
        )?;
        for p in emit_plot_data(&PlotData::QuantizationTrend { points: &points, n_ref: 80 }, dir)? {
            println!("wrote {}", p.display());
        }
    }

    let summary = dir.join("summary.csv");
    if !summary.exists() {
        return Err(Failure::Runtime(Error::InvalidArgument(format!(
            "no summary at {}",
            summary.display()
        ))));
    }
    let mut r = csv::Reader::from_path(&summary).map_err(Error::from)?;
    let runs = r
        .deserialize::<SeedOutcome>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(Error::from)?;
    let passed = runs.iter().filter(|r| r.pass).count();
    let required = required_passes(runs.len(), cfg.tolerances.pass_fraction);
    println!("{passed}/{} seeds pass (need {required})", runs.len());
    if deviation > 1e-10 || passed < required {
        Err(Failure::Acceptance)
    } else {
        Ok(())
    }
}
