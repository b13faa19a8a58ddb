//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use borel_adapt::adaptive::{
    mix_policies, policy_tv, run_algorithm1, run_algorithm2, run_alternating, run_identification,
    run_simultaneous, AlternatingConfig, EmpiricalConfig, Plant, Schedule, SimultaneousConfig,
};
use borel_adapt::harness::bench::{drift_family, optimal_cost, quantization_trend, quantized, B_SWEEP};
use borel_adapt::metrics::{bl_distance, dobrushin_coefficient, tv_distance, uniform_bl_distance};
use borel_adapt::models::{
    ContinuousModel, CostModel, CostTable, FiniteKernel, FiniteSpace, LineMetric,
};
use borel_adapt::planner::{
    average_cost_exact, bellman_apply, brute_force_optimal, relative_value_iteration,
    StationaryPolicy,
};
use borel_adapt::quantize::QuantizedMdp;

const SEEDS: u64 = 20;
const N: usize = 8;
const LONG_HORIZON: usize = 200_000;
const TRAILING: usize = 10_000;
const GAP_TOL: f64 = 0.05;
const GATE_SLACK: f64 = 1e-12;

fn report(id: usize, name: &str, pass: bool, detail: String) {
    let status = if pass { "PASS" } else { "FAIL" };
    // written past the test harness's output capture
    let _ = writeln!(std::io::stderr(), "criterion {id:>2} [{status}] {name}: {detail}");
}

struct Bench {
    mdp: QuantizedMdp,
    j_star: f64,
    c_max: f64,
}

fn bench() -> Bench {
    let mdp = quantized(&ContinuousModel::benchmark(), &CostModel::default(), N, N).unwrap();
    let j_star = optimal_cost(&mdp, 1e-12).unwrap();
    let c_max = mdp.cost.c_max();
    Bench { mdp, j_star, c_max }
}

fn plant(b: &Bench) -> Plant {
    Plant::Finite {
        kernel: b.mdp.kernel.clone(),
        cost: b.mdp.cost.clone(),
    }
}

fn random_kernel(rng: &mut ChaCha8Rng, n: usize, m: usize) -> FiniteKernel {
    let raw = FiniteKernel::from_fn(n, m, |_, _| {
        let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powi(3)).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
    .unwrap();
    // (1 − w)·k + w·uniform has coefficient at most (1 − w)·β(k)
    raw.mix(&FiniteKernel::uniform(n, m), 0.2).unwrap()
}

fn random_costs(rng: &mut ChaCha8Rng, n: usize, m: usize) -> CostTable {
    CostTable::new(n, m, (0..n * m).map(|_| rng.gen()).collect(), 1.0).unwrap()
}

fn span(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

#[test]
fn c01_acoe_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_err: f64 = 0.0;
    let mut worst_time = Duration::ZERO;
    let mut max_beta: f64 = 0.0;
    for _ in 0..100 {
        let k = random_kernel(&mut rng, 5, 3);
        let c = random_costs(&mut rng, 5, 3);
        max_beta = max_beta.max(dobrushin_coefficient(&k).value);
        let t0 = Instant::now();
        let sol = relative_value_iteration(&k, &c, 1e-12, 100_000).unwrap();
        worst_time = worst_time.max(t0.elapsed());
        let (j_brute, _) = brute_force_optimal(&k, &c).unwrap();
        worst_err = worst_err.max((sol.j_star - j_brute).abs());
    }
    let pass = max_beta <= 0.8 && worst_err <= 1e-8 && worst_time < Duration::from_millis(50);
    report(
        1,
        "ACOE correctness",
        pass,
        format!("max beta {max_beta:.4}, max |j* - brute| {worst_err:.2e}, slowest solve {worst_time:?}"),
    );
    assert!(pass);
}

#[test]
fn c02_span_contraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut violations = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=6);
        let m = rng.gen_range(1..=4);
        let raw = FiniteKernel::from_fn(n, m, |_, _| {
            let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .unwrap();
        let c = random_costs(&mut rng, n, m);
        let beta = dobrushin_coefficient(&raw).value;
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let (tv, _) = bellman_apply(&raw, &c, &v).unwrap();
        let (tw, _) = bellman_apply(&raw, &c, &w).unwrap();
        let lhs = span(&tv.iter().zip(&tw).map(|(a, b)| a - b).collect::<Vec<_>>());
        let rhs = beta * span(&v.iter().zip(&w).map(|(a, b)| a - b).collect::<Vec<_>>());
        worst = worst.max(lhs - rhs);
        if lhs > rhs + 1e-12 {
            violations += 1;
        }
    }
    let pass = violations == 0;
    report(
        2,
        "span contraction",
        pass,
        format!("{violations} violations in 1000 triples, max excess {worst:.2e}"),
    );
    assert!(pass);
}

#[test]
fn c03_algorithm1_consistency() {
    let b = bench();
    let plant = plant(&b);
    let errs: Vec<(f64, f64)> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let cfg = EmpiricalConfig {
                horizon: LONG_HORIZON,
                seed,
                checkpoints: vec![LONG_HORIZON / 2, LONG_HORIZON],
                ..Default::default()
            };
            let out = run_algorithm1(&plant, Some(&b.mdp.kernel), Some(b.j_star), &cfg).unwrap();
            let cp = &out.record.checkpoints;
            (cp[0].est_err_tv.unwrap(), cp[1].est_err_tv.unwrap())
        })
        .collect();
    let accurate = errs.iter().filter(|(_, e)| *e <= 0.05).count();
    let decreasing = errs.iter().filter(|(e1, e2)| e1 >= e2).count();
    let median = {
        let mut v: Vec<f64> = errs.iter().map(|e| e.1).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let pass = accurate >= 18 && decreasing >= 16;
    report(
        3,
        "Algorithm I consistency",
        pass,
        format!(
            "max-row TV <= 0.05 at T=2e5 in {accurate}/20 (need 18), median error {median:.3}; \
             err(1e5) >= err(2e5) in {decreasing}/20 (need 16)"
        ),
    );
    assert!(pass);
}

#[test]
fn c04_bayesian_identifiability() {
    let b = bench();
    let model = ContinuousModel::benchmark();
    let family = drift_family(&model, &CostModel::default(), N, N, &B_SWEEP, Some(2)).unwrap();
    assert_eq!(family.member(2), &b.mdp.kernel);
    let space = FiniteSpace::unit_interval_centers(N, LineMetric::Euclidean).unwrap();
    let mut min_bl = f64::INFINITY;
    for i in 0..family.len() {
        for j in i + 1..family.len() {
            min_bl = min_bl.min(uniform_bl_distance(family.member(i), family.member(j), &space).unwrap().value);
        }
    }
    let plant = plant(&b);
    let prior = vec![1.0 / family.len() as f64; family.len()];
    let horizon = 50_000;
    let results: Vec<(f64, bool)> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let rec = run_identification(&plant, &family, &prior, horizon, seed).unwrap();
            let mass = *rec.posterior_mass.last().unwrap();
            let tail = &rec.rows[horizon - TRAILING..];
            let stable = tail.iter().all(|r| r.map_index == tail[0].map_index);
            (mass, stable)
        })
        .collect();
    let ok = results.iter().filter(|(m, s)| *m >= 0.99 && *s).count();
    let min_mass = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let pass = min_bl >= 0.1 && ok >= 18;
    report(
        4,
        "Bayesian identifiability",
        pass,
        format!(
            "min pairwise uniform BL {min_bl:.3}; mass >= 0.99 with stable MAP in {ok}/20 (need 18), \
             min mass {min_mass:.6}"
        ),
    );
    assert!(pass);
}

#[test]
fn c05_algorithm2_near_optimality() {
    let b = bench();
    let plant = plant(&b);
    let beta = 0.7;
    let results: Vec<(f64, bool, usize)> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let cfg = EmpiricalConfig {
                horizon: LONG_HORIZON,
                seed,
                checkpoints: (1..=10).map(|i| i * LONG_HORIZON / 10).collect(),
                ..Default::default()
            };
            let out = run_algorithm2(&plant, Some(&b.mdp.kernel), Some(b.j_star), beta, None, &cfg)
                .unwrap();
            let rec = &out.record;
            let gap = rec.trailing_avg_cost(TRAILING) - b.j_star;
            let logged = rec
                .gate
                .iter()
                .all(|g| !g.accepted || g.coefficient <= beta + GATE_SLACK);
            let snapshots = rec
                .checkpoints
                .iter()
                .map(|c| &c.kernel)
                .chain(std::iter::once(&out.estimate))
                .all(|k| dobrushin_coefficient(k).value <= beta + GATE_SLACK);
            let accepted = rec.gate.iter().filter(|g| g.accepted).count();
            (gap, logged && snapshots, accepted)
        })
        .collect();
    let near = results.iter().filter(|r| r.0 <= GAP_TOL * b.c_max).count();
    let audited = results.iter().all(|r| r.1);
    let accepted: usize = results.iter().map(|r| r.2).sum();
    let mean_gap = results.iter().map(|r| r.0).sum::<f64>() / results.len() as f64;
    let pass = near >= 18 && audited;
    report(
        5,
        "Algorithm II near-optimality",
        pass,
        format!(
            "trailing gap <= 0.05 in {near}/20 (need 18), mean gap {mean_gap:.4}, j* {:.5}; \
             gate audit {}, {accepted} accepted estimates over all seeds",
            b.j_star,
            if audited { "clean" } else { "VIOLATED" }
        ),
    );
    assert!(pass);
}

#[test]
fn c06_alternating_and_simultaneous() {
    let b = bench();
    let model = ContinuousModel::benchmark();
    let family = drift_family(&model, &CostModel::default(), N, N, &B_SWEEP, Some(2)).unwrap();
    let space = FiniteSpace::unit_interval_centers(N, LineMetric::Euclidean).unwrap();
    let plant = plant(&b);
    let prior = vec![1.0 / family.len() as f64; family.len()];

    let alternating: Vec<(f64, f64)> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let gap = |t_prime: usize| {
                let schedule = Schedule::with_default_exploration(t_prime).unwrap();
                let cfg = AlternatingConfig::new(schedule, LONG_HORIZON / t_prime, 0.5, seed);
                let rec = run_alternating(&plant, &family, &prior, &space, None, Some(b.j_star), &cfg)
                    .unwrap();
                rec.summary.unwrap().gap.unwrap()
            };
            (gap(1_000), gap(10_000))
        })
        .collect();
    let improved = alternating.iter().filter(|(g1, g2)| g2 < g1).count();

    let simultaneous: Vec<(f64, bool, usize)> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let cfg = SimultaneousConfig::new(LONG_HORIZON, seed);
            let rec = run_simultaneous(&plant, &family, &prior, None, Some(b.j_star), &cfg).unwrap();
            let gap = rec.summary.as_ref().unwrap().gap.unwrap();
            let stab = rec.summary.as_ref().unwrap().stabilization_step.unwrap();
            let k = *rec.k_trace.last().unwrap();
            let tail = &rec.rows[stab.min(rec.len())..];
            let freq_ok = if tail.is_empty() {
                false
            } else {
                assert!(rec.k_trace[stab..].iter().all(|&kk| kk == k));
                let p = 1.0 / ((1 + k) * (1 + k)) as f64;
                let n = tail.len() as f64;
                let freq = tail.iter().filter(|r| r.explore_flag == 1).count() as f64 / n;
                let sigma = (p * (1.0 - p) / n).sqrt();
                (freq - p).abs() <= 3.0 * sigma
            };
            (gap, freq_ok, k)
        })
        .collect();
    let sim_ok = simultaneous
        .iter()
        .filter(|(g, f, _)| *g <= GAP_TOL * b.c_max && *f)
        .count();
    let gaps: Vec<String> = simultaneous.iter().map(|(g, _, k)| format!("{g:.3}/k={k}")).collect();
    let pass = improved >= 16 && sim_ok >= 18;
    report(
        6,
        "alternating and simultaneous near-optimality",
        pass,
        format!(
            "alternating gap(T'=1e4) < gap(T'=1e3) in {improved}/20 (need 16); simultaneous gap <= 0.05 \
             with exploration frequency within 3 sigma in {sim_ok}/20 (need 18) [{}]",
            gaps.join(" ")
        ),
    );
    assert!(pass);
}

#[test]
fn c07_continuity_and_robustness() {
    let b = bench();
    let tau = &b.mdp.kernel;
    let cost = &b.mdp.cost;
    let j_tau = relative_value_iteration(tau, cost, 1e-13, 1_000_000).unwrap().j_star;
    let uniform = FiniteKernel::uniform(N, N);
    let mut rows = Vec::new();
    for eps in [0.2, 0.1, 0.05, 0.01] {
        let k_eps = tau.mix(&uniform, eps).unwrap();
        let sol = relative_value_iteration(&k_eps, cost, 1e-13, 1_000_000).unwrap();
        let applied =
            average_cost_exact(tau, cost, &StationaryPolicy::Deterministic(sol.policy)).unwrap();
        rows.push((eps, (sol.j_star - j_tau).abs(), applied - j_tau));
    }
    // 1e-12 absorbs round-off between equal policies
    let monotone = rows
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + 1e-12 && w[1].2 <= w[0].2 + 1e-12);
    let last = rows.last().unwrap();
    let small = last.1 < 0.02 * b.c_max && last.2 < 0.02 * b.c_max;
    let pass = monotone && small;
    let detail: Vec<String> = rows
        .iter()
        .map(|(e, d, a)| format!("eps={e}: |dj*|={d:.2e} mismatch={a:.2e}"))
        .collect();
    report(7, "continuity and robustness", pass, detail.join(", "));
    assert!(pass);
}

/// Best value of `Σ f_i w_i` over `‖f‖_∞ + Lip(f) ≤ 1` on three points by a
/// grid over the Lipschitz constant and one free value; the remaining value
/// is optimized in closed form.
fn bl_grid_search(w: [f64; 3], d: [[f64; 3]; 3]) -> f64 {
    const STEPS: usize = 2000;
    let mut best: f64 = 0.0;
    for li in 0..=STEPS {
        let l = li as f64 / STEPS as f64;
        // with g_0 = 0, the sup norm bound becomes range(g) ≤ 2(1 − l)
        let r = 2.0 * (1.0 - l);
        let g1_max = (l * d[0][1]).min(r);
        for gi in 0..=STEPS {
            let g1 = -g1_max + 2.0 * g1_max * gi as f64 / STEPS as f64;
            let lo = (-l * d[0][2]).max(g1 - l * d[1][2]).max(g1.max(0.0) - r);
            let hi = (l * d[0][2]).min(g1 + l * d[1][2]).min(g1.min(0.0) + r);
            if lo > hi + 1e-15 {
                continue;
            }
            let g2 = if w[2] >= 0.0 { hi } else { lo };
            best = best.max(g1 * w[1] + g2 * w[2]);
        }
    }
    best
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let support = rng.gen_range(1..=n);
    let mut w = vec![0.0; n];
    for x in w.iter_mut().take(support) {
        *x = rng.gen::<f64>() + 1e-3;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

#[test]
fn c08_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);

    let mut grid_err: f64 = 0.0;
    for _ in 0..200 {
        let xs: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..3.0)).collect();
        let space =
            FiniteSpace::from_points(xs.iter().map(|&x| vec![x]).collect(), LineMetric::Euclidean)
                .unwrap();
        let mu = random_measure(&mut rng, 3);
        let mut nu = random_measure(&mut rng, 3);
        nu.rotate_right(rng.gen_range(0..3));
        let mut d = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                d[i][j] = (xs[i] - xs[j]).abs();
            }
        }
        let w = [mu[0] - nu[0], mu[1] - nu[1], mu[2] - nu[2]];
        let lp = bl_distance(&mu, &nu, &space).unwrap();
        grid_err = grid_err.max((lp - bl_grid_search(w, d)).abs());
    }

    let mut closed_err: f64 = 0.0;
    for dist in [0.5, 1.0, 2.0] {
        let space = FiniteSpace::from_points(vec![vec![0.0], vec![dist]], LineMetric::Euclidean).unwrap();
        let v = bl_distance(&[1.0, 0.0], &[0.0, 1.0], &space).unwrap();
        closed_err = closed_err.max((v - 2.0 * dist / (2.0 + dist)).abs());
    }

    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=5);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(0.0..2.0)]).collect();
        let space = FiniteSpace::from_points(pts, LineMetric::Euclidean).unwrap();
        let [a, b, c] = [0, 1, 2].map(|_| random_measure(&mut rng, n));
        for (metric, slack) in [(0usize, 1e-12), (1, 1e-9)] {
            let dist = |p: &[f64], q: &[f64]| {
                if metric == 0 {
                    tv_distance(p, q).unwrap()
                } else {
                    bl_distance(p, q, &space).unwrap()
                }
            };
            let (ab, ba, bc, ac, aa) = (dist(&a, &b), dist(&b, &a), dist(&b, &c), dist(&a, &c), dist(&a, &a));
            let ok = ab >= -slack
                && (ab - ba).abs() <= slack
                && aa.abs() <= slack
                && ac <= ab + bc + slack
                && ab <= 2.0 + slack;
            if !ok {
                violations += 1;
            }
        }
        if bl_distance(&a, &b, &space).unwrap() > tv_distance(&a, &b).unwrap() + 1e-9 {
            violations += 1;
        }
    }

    let pass = grid_err <= 2e-3 && closed_err <= 1e-9 && violations == 0;
    report(
        8,
        "metric oracles",
        pass,
        format!(
            "LP vs grid max diff {grid_err:.2e}; two-point closed form max diff {closed_err:.2e}; \
             {violations} axiom violations"
        ),
    );
    assert!(pass);
}

#[test]
fn c09_quantization_trend() {
    let trend = quantization_trend(
        &ContinuousModel::benchmark(),
        &CostModel::default(),
        &[5, 10, 20, 40],
        80,
        Some(N),
        1e-12,
    )
    .unwrap();
    let pass = trend.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-6);
    let detail: Vec<String> = trend.iter().map(|(n, g)| format!("n={n}: {g:.3e}")).collect();
    report(9, "quantization trend", pass, detail.join(", "));
    assert!(pass);
}

#[test]
fn c10_mixing_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut excess: f64 = f64::NEG_INFINITY;
    for _ in 0..500 {
        let (n, m) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let rows = |rng: &mut ChaCha8Rng| {
            (0..n)
                .map(|_| random_measure(rng, m))
                .collect::<Vec<_>>()
        };
        let gs = StationaryPolicy::Randomized(rows(&mut rng));
        let ge = StationaryPolicy::Randomized(rows(&mut rng));
        let p: f64 = rng.gen();
        let mixed = mix_policies(&gs, &ge, p, m).unwrap();
        for d in policy_tv(&mixed, &gs, m) {
            excess = excess.max(d - 2.0 * p);
        }
    }
    let mut equality_err: f64 = 0.0;
    for p in [0.0, 0.1, 0.25, 0.5, 1.0] {
        let gs = StationaryPolicy::Deterministic(vec![0, 1, 2]);
        let ge = StationaryPolicy::Deterministic(vec![1, 2, 0]);
        let mixed = mix_policies(&gs, &ge, p, 3).unwrap();
        for d in policy_tv(&mixed, &gs, 3) {
            equality_err = equality_err.max((d - 2.0 * p).abs());
        }
    }
    let pass = excess <= 1e-12 && equality_err <= 1e-12;
    report(
        10,
        "mixing bound",
        pass,
        format!("max TV - 2p over 500 random pairs {excess:.2e}; disjoint-support equality error {equality_err:.2e}"),
    );
    assert!(pass);
}
