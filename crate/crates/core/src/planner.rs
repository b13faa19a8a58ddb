//! Average-cost planning on finite models.
//!
//! [`relative_value_iteration`] solves `j* + v*(x) = min_u [c(x,u) + Σ_y τ(y|x,u) v*(y)]`
//! by iterating `v ← Tv − (Tv)(0)`. When every pair of kernel rows overlaps
//! (Dobrushin coefficient `β < 1`) the span seminorm of `Tv − Tw` contracts by
//! `β`, so the loop terminates geometrically.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{dobrushin_coefficient, dobrushin_of_matrix, l1};
use crate::models::{is_stochastic, sample_index, CostTable, FiniteKernel};

/// Bias normalization: `v_star[REFERENCE_STATE] = 0`.
pub const REFERENCE_STATE: usize = 0;

/// Iteration cap for power iteration.
pub const POWER_ITERATION_CAP: usize = 1_000_000;

/// A stationary Markov policy, deterministic or randomized.
///
/// Serializes as a JSON array: action indices for the deterministic form, or
/// per-state probability rows for the randomized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StationaryPolicy {
    Deterministic(Vec<usize>),
    Randomized(Vec<Vec<f64>>),
}

impl StationaryPolicy {
    pub fn n_states(&self) -> usize {
        match self {
            StationaryPolicy::Deterministic(a) => a.len(),
            StationaryPolicy::Randomized(r) => r.len(),
        }
    }

    /// `γ(u | x)`.
    pub fn prob(&self, x: usize, u: usize) -> f64 {
        match self {
            StationaryPolicy::Deterministic(a) => f64::from(u8::from(a[x] == u)),
            StationaryPolicy::Randomized(r) => r[x][u],
        }
    }

    /// Per-state action distributions.
    pub fn to_rows(&self, n_actions: usize) -> Vec<Vec<f64>> {
        match self {
            StationaryPolicy::Deterministic(a) => a
                .iter()
                .map(|&u| {
                    let mut row = vec![0.0; n_actions];
                    row[u] = 1.0;
                    row
                })
                .collect(),
            StationaryPolicy::Randomized(r) => r.clone(),
        }
    }

    /// Checks the policy against a model shape.
    pub fn validate(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.n_states() != n_states {
            return Err(Error::ShapeMismatch(format!(
                "policy covers {} states, model has {n_states}",
                self.n_states()
            )));
        }
        match self {
            StationaryPolicy::Deterministic(a) => {
                if let Some(&u) = a.iter().find(|&&u| u >= n_actions) {
                    return Err(Error::ActionOutOfRange {
                        index: u,
                        n_actions,
                    });
                }
            }
            StationaryPolicy::Randomized(rows) => {
                for (x, row) in rows.iter().enumerate() {
                    if row.len() != n_actions {
                        return Err(Error::ShapeMismatch(format!(
                            "policy row {x} has {} actions, model has {n_actions}",
                            row.len()
                        )));
                    }
                    if !is_stochastic(row) {
                        return Err(Error::InvalidArgument(format!(
                            "policy row {x} is not a probability vector"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Draws an action at state `x`. Randomized policies consume one variate;
    /// deterministic ones consume none.
    pub fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        match self {
            StationaryPolicy::Deterministic(a) => a[x],
            StationaryPolicy::Randomized(r) => sample_index(&r[x], rng),
        }
    }
}

/// Solution of the average-cost optimality equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerSolution {
    pub j_star: f64,
    pub v_star: Vec<f64>,
    pub policy: Vec<usize>,
    pub iterations: usize,
    pub residual_span: f64,
}

impl PlannerSolution {
    pub fn stationary_policy(&self) -> StationaryPolicy {
        StationaryPolicy::Deterministic(self.policy.clone())
    }
}

fn check_model(k: &FiniteKernel, c: &CostTable) -> Result<()> {
    if !c.matches(k) {
        return Err(Error::ShapeMismatch(format!(
            "cost table ({}, {}) vs kernel ({}, {})",
            c.n_states(),
            c.n_actions(),
            k.n_states(),
            k.n_actions()
        )));
    }
    Ok(())
}

/// `Tv` into `tv` and the lowest-index minimizing action into `policy`.
pub(crate) fn bellman_into(
    k: &FiniteKernel,
    c: &CostTable,
    v: &[f64],
    tv: &mut [f64],
    policy: &mut [usize],
) {
    let n_actions = k.n_actions();
    for x in 0..k.n_states() {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for u in 0..n_actions {
            let q = c.get(x, u) + dot(k.row(x, u), v);
            if q < best {
                best = q;
                arg = u;
            }
        }
        tv[x] = best;
        policy[x] = arg;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn span(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    })
}

/// `(Tv, argmin)` with ties broken to the lowest action index.
pub fn bellman_apply(
    k: &FiniteKernel,
    c: &CostTable,
    v: &[f64],
) -> Result<(Vec<f64>, Vec<usize>)> {
    check_model(k, c)?;
    if v.len() != k.n_states() {
        return Err(Error::LengthMismatch {
            expected: k.n_states(),
            actual: v.len(),
        });
    }
    let mut tv = vec![0.0; k.n_states()];
    let mut policy = vec![0; k.n_states()];
    bellman_into(k, c, v, &mut tv, &mut policy);
    Ok((tv, policy))
}

/// Relative value iteration from `v = 0`.
///
/// Stops once `span(Tv − v) ≤ tol`; `j_star` is the midpoint of
/// `[min(Tv − v), max(Tv − v)]`, hence within `tol/2` of the optimal cost.
pub fn relative_value_iteration(
    k: &FiniteKernel,
    c: &CostTable,
    tol: f64,
    max_iter: usize,
) -> Result<PlannerSolution> {
    check_model(k, c)?;
    let beta = dobrushin_coefficient(k).value;
    if beta >= 1.0 {
        log::warn!("Dobrushin coefficient is {beta}; relative value iteration may not converge");
    }
    relative_value_iteration_from(k, c, tol, max_iter, &vec![0.0; k.n_states()])
}

/// Relative value iteration warm-started from `v0`.
pub fn relative_value_iteration_from(
    k: &FiniteKernel,
    c: &CostTable,
    tol: f64,
    max_iter: usize,
    v0: &[f64],
) -> Result<PlannerSolution> {
    check_model(k, c)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol = {tol} must be positive")));
    }
    if v0.len() != k.n_states() {
        return Err(Error::LengthMismatch {
            expected: k.n_states(),
            actual: v0.len(),
        });
    }
    let mut ws = RviWorkspace::new(k.n_states());
    ws.v.copy_from_slice(v0);
    let r = ws.solve(k, c, tol, max_iter)?;
    Ok(PlannerSolution {
        j_star: r.j_star,
        v_star: ws.v.clone(),
        policy: ws.policy.clone(),
        iterations: r.iterations,
        residual_span: r.residual_span,
    })
}

pub(crate) struct RviOutcome {
    pub j_star: f64,
    pub iterations: usize,
    pub residual_span: f64,
}

/// Reusable buffers for repeated warm-started solves.
#[derive(Debug, Clone)]
pub(crate) struct RviWorkspace {
    pub v: Vec<f64>,
    pub policy: Vec<usize>,
    tv: Vec<f64>,
}

impl RviWorkspace {
    pub fn new(n_states: usize) -> Self {
        RviWorkspace {
            v: vec![0.0; n_states],
            policy: vec![0; n_states],
            tv: vec![0.0; n_states],
        }
    }

    /// Iterates from the current `v`. On success `v` is the bias and
    /// `policy` the greedy policy for it.
    pub fn solve(
        &mut self,
        k: &FiniteKernel,
        c: &CostTable,
        tol: f64,
        max_iter: usize,
    ) -> Result<RviOutcome> {
        let offset = self.v[REFERENCE_STATE];
        self.v.iter_mut().for_each(|x| *x -= offset);
        let mut residual = f64::INFINITY;
        for it in 0..max_iter {
            bellman_into(k, c, &self.v, &mut self.tv, &mut self.policy);
            let (lo, hi) = span(self.tv.iter().zip(&self.v).map(|(t, v)| t - v));
            residual = hi - lo;
            if residual <= tol {
                return Ok(RviOutcome {
                    j_star: 0.5 * (lo + hi),
                    iterations: it + 1,
                    residual_span: residual,
                });
            }
            let r = self.tv[REFERENCE_STATE];
            for (v, t) in self.v.iter_mut().zip(&self.tv) {
                *v = t - r;
            }
        }
        Err(Error::NotConverged {
            iterations: max_iter,
            residual,
        })
    }
}

/// State-to-state transition matrix, row-major `n × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateChain {
    n: usize,
    p: Vec<f64>,
}

impl StateChain {
    pub fn new(n: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                actual: p.len(),
            });
        }
        for x in 0..n {
            if !is_stochastic(&p[x * n..(x + 1) * n]) {
                return Err(Error::InvalidKernel(format!("chain row {x} is not stochastic")));
            }
        }
        Ok(StateChain { n, p })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.p[x * self.n..(x + 1) * self.n]
    }

    pub fn data(&self) -> &[f64] {
        &self.p
    }

    /// `μP`.
    pub fn push_forward(&self, mu: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (x, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(self.row(x)) {
                *o += m * p;
            }
        }
    }

    pub fn dobrushin(&self) -> f64 {
        dobrushin_of_matrix(&self.p, self.n)
    }
}

/// `P_γ(y|x) = Σ_u γ(u|x)·k(y|x,u)`.
pub fn policy_kernel(k: &FiniteKernel, policy: &StationaryPolicy) -> Result<StateChain> {
    policy.validate(k.n_states(), k.n_actions())?;
    let n = k.n_states();
    let mut p = vec![0.0; n * n];
    for x in 0..n {
        let out = &mut p[x * n..(x + 1) * n];
        for u in 0..k.n_actions() {
            let w = policy.prob(x, u);
            if w == 0.0 {
                continue;
            }
            for (o, q) in out.iter_mut().zip(k.row(x, u)) {
                *o += w * q;
            }
        }
    }
    Ok(StateChain { n, p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantMeasure {
    pub weights: Vec<f64>,
    pub residual_tv: f64,
}

/// Power iteration from the uniform distribution.
///
/// Stops when successive iterates are within `tol·(1 − β̂)` in TV, where `β̂`
/// is the chain's Dobrushin coefficient; the returned measure then satisfies
/// `‖πP − π‖_TV ≤ tol`.
pub fn invariant_measure(p: &StateChain, tol: f64) -> Result<InvariantMeasure> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol = {tol} must be positive")));
    }
    let n = p.n();
    let beta = p.dobrushin();
    let threshold = tol * (1.0 - beta);
    let mut mu = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..POWER_ITERATION_CAP {
        p.push_forward(&mu, &mut next);
        let step = l1(&mu, &next);
        std::mem::swap(&mut mu, &mut next);
        if step <= threshold {
            renormalize(&mut mu);
            p.push_forward(&mu, &mut next);
            return Ok(InvariantMeasure {
                residual_tv: l1(&mu, &next),
                weights: mu,
            });
        }
    }
    p.push_forward(&mu, &mut next);
    Err(Error::NotConverged {
        iterations: POWER_ITERATION_CAP,
        residual: l1(&mu, &next),
    })
}

fn renormalize(mu: &mut [f64]) {
    let s: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|m| *m /= s);
}

/// Invariant measure by a direct linear solve of `π(P − I) = 0, Σπ = 1`.
/// Intended as an oracle for small chains (n ≤ 50).
pub fn invariant_measure_exact(p: &StateChain) -> Result<Vec<f64>> {
    let n = p.n();
    // rows 0..n-1: (Pᵀ − I) π = 0 ; last row: Σπ = 1
    let mut a = DMatrix::<f64>::zeros(n, n);
    for y in 0..n {
        for x in 0..n {
            a[(y, x)] = p.row(x)[y] - if x == y { 1.0 } else { 0.0 };
        }
    }
    for x in 0..n {
        a[(n - 1, x)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidKernel("chain has no unique invariant measure".into()))?;
    Ok(pi.iter().copied().collect())
}

fn policy_cost(c: &CostTable, policy: &StationaryPolicy, x: usize) -> f64 {
    (0..c.n_actions())
        .map(|u| policy.prob(x, u) * c.get(x, u))
        .sum()
}

/// Long-run average cost `Σ_x π(x) Σ_u γ(u|x) c(x,u)`.
pub fn average_cost(
    k: &FiniteKernel,
    c: &CostTable,
    policy: &StationaryPolicy,
    tol: f64,
) -> Result<f64> {
    check_model(k, c)?;
    let chain = policy_kernel(k, policy)?;
    let pi = invariant_measure(&chain, tol)?;
    Ok(pi
        .weights
        .iter()
        .enumerate()
        .map(|(x, w)| w * policy_cost(c, policy, x))
        .sum())
}

/// Same as [`average_cost`] with the direct linear solve.
pub fn average_cost_exact(
    k: &FiniteKernel,
    c: &CostTable,
    policy: &StationaryPolicy,
) -> Result<f64> {
    check_model(k, c)?;
    let chain = policy_kernel(k, policy)?;
    let pi = invariant_measure_exact(&chain)?;
    Ok(pi
        .iter()
        .enumerate()
        .map(|(x, w)| w * policy_cost(c, policy, x))
        .sum())
}

fn check_horizon(k: &FiniteKernel, horizon: usize, x0: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if x0 >= k.n_states() {
        return Err(Error::StateOutOfRange {
            index: x0,
            n_states: k.n_states(),
        });
    }
    Ok(())
}

/// `(1/T) Σ_{t<T} E[c(x_t, u_t)]` by propagating the state distribution.
pub fn finite_horizon_cost_exact(
    k: &FiniteKernel,
    c: &CostTable,
    policy: &StationaryPolicy,
    horizon: usize,
    x0: usize,
) -> Result<f64> {
    check_model(k, c)?;
    check_horizon(k, horizon, x0)?;
    let chain = policy_kernel(k, policy)?;
    let per_state: Vec<f64> = (0..k.n_states())
        .map(|x| policy_cost(c, policy, x))
        .collect();
    let mut mu = vec![0.0; k.n_states()];
    mu[x0] = 1.0;
    let mut next = mu.clone();
    let mut total = 0.0;
    for _ in 0..horizon {
        total += dot(&mu, &per_state);
        chain.push_forward(&mu, &mut next);
        std::mem::swap(&mut mu, &mut next);
    }
    Ok(total / horizon as f64)
}

/// Empirical average cost along one simulated trajectory.
pub fn finite_horizon_cost_sampled<R: Rng + ?Sized>(
    k: &FiniteKernel,
    c: &CostTable,
    policy: &StationaryPolicy,
    horizon: usize,
    x0: usize,
    rng: &mut R,
) -> Result<f64> {
    check_model(k, c)?;
    check_horizon(k, horizon, x0)?;
    policy.validate(k.n_states(), k.n_actions())?;
    let mut x = x0;
    let mut total = 0.0;
    for _ in 0..horizon {
        let u = policy.sample(x, rng);
        total += c.get(x, u);
        x = sample_index(k.row(x, u), rng);
    }
    Ok(total / horizon as f64)
}

/// Upper limit on the number of enumerated policies.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Enumerates every deterministic stationary policy and returns the cheapest
/// (lexicographically smallest on ties), evaluating each by a direct solve.
pub fn brute_force_optimal(k: &FiniteKernel, c: &CostTable) -> Result<(f64, StationaryPolicy)> {
    check_model(k, c)?;
    let (n, m) = (k.n_states(), k.n_actions());
    let count = (m as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(count));
    }
    let mut actions = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let policy = StationaryPolicy::Deterministic(actions.clone());
        let j = average_cost_exact(k, c, &policy)?;
        if best.as_ref().is_none_or(|(b, _)| j < b - 1e-12) {
            best = Some((j, actions.clone()));
        }
        // odometer increment; the last state varies fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                let (j, a) = best.expect("at least one policy");
                return Ok((j, StationaryPolicy::Deterministic(a)));
            }
            pos -= 1;
            actions[pos] += 1;
            if actions[pos] < m {
                break;
            }
            actions[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state() -> (FiniteKernel, CostTable) {
        // action 0: stay-ish, action 1: switch-ish
        let k = FiniteKernel::new(
            2,
            2,
            vec![0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.7, 0.3],
        )
        .unwrap();
        let c = CostTable::new(2, 2, vec![1.0, 0.0, 0.2, 0.6], 1.0).unwrap();
        (k, c)
    }

    #[test]
    fn bellman_on_zero_is_min_cost() {
        let (k, c) = two_state();
        let (tv, pol) = bellman_apply(&k, &c, &[0.0, 0.0]).unwrap();
        assert_eq!(tv, vec![0.0, 0.2]);
        assert_eq!(pol, vec![1, 0]);
    }

    #[test]
    fn bellman_hand_instance() {
        let (k, c) = two_state();
        let v = [0.0, 1.0];
        // x=0: u0 = 1 + 0.1 = 1.1, u1 = 0 + 0.8 = 0.8 → 0.8 (u1)
        // x=1: u0 = 0.2 + 0.5 = 0.7, u1 = 0.6 + 0.3 = 0.9 → 0.7 (u0)
        let (tv, pol) = bellman_apply(&k, &c, &v).unwrap();
        assert_abs_diff_eq!(tv[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(tv[1], 0.7, epsilon = 1e-15);
        assert_eq!(pol, vec![1, 0]);
    }

    #[test]
    fn bellman_single_action_is_policy_evaluation() {
        let k = FiniteKernel::new(2, 1, vec![0.9, 0.1, 0.2, 0.8]).unwrap();
        let c = CostTable::new(2, 1, vec![0.3, 0.7], 1.0).unwrap();
        let (tv, _) = bellman_apply(&k, &c, &[2.0, -1.0]).unwrap();
        assert_abs_diff_eq!(tv[0], 0.3 + 1.8 - 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(tv[1], 0.7 + 0.4 - 0.8, epsilon = 1e-15);
    }

    #[test]
    fn bellman_ties_go_to_lowest_action() {
        let k = FiniteKernel::uniform(2, 3);
        let c = CostTable::constant(2, 3, 0.5, 1.0).unwrap();
        let (_, pol) = bellman_apply(&k, &c, &[0.0, 0.0]).unwrap();
        assert_eq!(pol, vec![0, 0]);
    }

    #[test]
    fn rvi_constant_cost() {
        let (k, _) = two_state();
        let c = CostTable::constant(2, 2, 0.37, 1.0).unwrap();
        let s = relative_value_iteration(&k, &c, 1e-12, 1000).unwrap();
        assert_abs_diff_eq!(s.j_star, 0.37, epsilon = 1e-12);
        assert!(s.v_star.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rvi_identical_rows_decouple() {
        // every row is (0.25, 0.75): Tv(x) = min_u c(x,u) + const
        let k = FiniteKernel::new(2, 2, [0.25, 0.75].repeat(4)).unwrap();
        let c = CostTable::new(2, 2, vec![0.4, 0.8, 0.9, 0.6], 1.0).unwrap();
        let s = relative_value_iteration(&k, &c, 1e-12, 100).unwrap();
        // j* = 0.25·0.4 + 0.75·0.6
        assert_abs_diff_eq!(s.j_star, 0.55, epsilon = 1e-12);
        assert_eq!(s.policy, vec![0, 1]);
        assert!(s.iterations <= 3, "{} iterations", s.iterations);
    }

    #[test]
    fn rvi_reports_non_convergence() {
        // periodic two-state chain with no contraction
        let k = FiniteKernel::new(2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let c = CostTable::new(2, 1, vec![0.0, 1.0], 1.0).unwrap();
        assert!(matches!(
            relative_value_iteration(&k, &c, 1e-9, 50),
            Err(Error::NotConverged { iterations: 50, .. })
        ));
    }

    #[test]
    fn acoe_residual_within_tolerance() {
        let (k, c) = two_state();
        let tol = 1e-10;
        let s = relative_value_iteration(&k, &c, tol, 10_000).unwrap();
        let (tv, _) = bellman_apply(&k, &c, &s.v_star).unwrap();
        for (v, t) in s.v_star.iter().zip(&tv) {
            assert!((s.j_star + v - t).abs() <= tol);
        }
        assert_eq!(s.v_star[REFERENCE_STATE], 0.0);
        let bf = brute_force_optimal(&k, &c).unwrap();
        assert_abs_diff_eq!(s.j_star, bf.0, epsilon = 1e-9);
        let ac = average_cost(&k, &c, &s.stationary_policy(), 1e-12).unwrap();
        assert_abs_diff_eq!(ac, s.j_star, epsilon = 1e-9);
    }

    #[test]
    fn policy_kernel_examples() {
        let (k, _) = two_state();
        let det = policy_kernel(&k, &StationaryPolicy::Deterministic(vec![1, 0])).unwrap();
        assert_eq!(det.row(0), k.row(0, 1));
        assert_eq!(det.row(1), k.row(1, 0));
        let mixed = policy_kernel(
            &k,
            &StationaryPolicy::Randomized(vec![vec![0.5, 0.5], vec![0.25, 0.75]]),
        )
        .unwrap();
        assert_abs_diff_eq!(mixed.row(0)[0], 0.5 * 0.9 + 0.5 * 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(mixed.row(1)[0], 0.25 * 0.5 + 0.75 * 0.7, epsilon = 1e-15);
        assert!(policy_kernel(&k, &StationaryPolicy::Deterministic(vec![2, 0])).is_err());
    }

    #[test]
    fn invariant_measure_examples() {
        let ds = StateChain::new(3, vec![0.2, 0.3, 0.5, 0.5, 0.2, 0.3, 0.3, 0.5, 0.2]).unwrap();
        let pi = invariant_measure(&ds, 1e-12).unwrap();
        for w in &pi.weights {
            assert_abs_diff_eq!(*w, 1.0 / 3.0, epsilon = 1e-12);
        }
        let same = StateChain::new(2, vec![0.3, 0.7, 0.3, 0.7]).unwrap();
        let pi = invariant_measure(&same, 1e-12).unwrap();
        assert_abs_diff_eq!(pi.weights[0], 0.3, epsilon = 1e-15);

        let two = StateChain::new(2, vec![0.9, 0.1, 0.2, 0.8]).unwrap();
        let pi = invariant_measure(&two, 1e-12).unwrap();
        assert_abs_diff_eq!(pi.weights[0], 2.0 / 3.0, epsilon = 1e-12);
        assert!(pi.residual_tv <= 1e-12);
        let exact = invariant_measure_exact(&two).unwrap();
        assert_abs_diff_eq!(exact[1], 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn average_cost_hand_instance() {
        let k = FiniteKernel::new(2, 1, vec![0.9, 0.1, 0.2, 0.8]).unwrap();
        let c = CostTable::new(2, 1, vec![0.3, 0.9], 1.0).unwrap();
        let policy = StationaryPolicy::Deterministic(vec![0, 0]);
        // π = (2/3, 1/3)
        let j = average_cost(&k, &c, &policy, 1e-12).unwrap();
        assert_abs_diff_eq!(j, 2.0 / 3.0 * 0.3 + 1.0 / 3.0 * 0.9, epsilon = 1e-11);
        let constant = CostTable::constant(2, 1, 0.42, 1.0).unwrap();
        assert_abs_diff_eq!(average_cost(&k, &constant, &policy, 1e-12).unwrap(), 0.42, epsilon = 1e-12);
    }

    #[test]
    fn finite_horizon_examples() {
        let (k, c) = two_state();
        let policy = StationaryPolicy::Randomized(vec![vec![0.3, 0.7], vec![1.0, 0.0]]);
        let one = finite_horizon_cost_exact(&k, &c, &policy, 1, 0).unwrap();
        assert_abs_diff_eq!(one, 0.3 * 1.0 + 0.7 * 0.0, epsilon = 1e-15);
        let constant = CostTable::constant(2, 2, 0.8, 1.0).unwrap();
        assert_abs_diff_eq!(
            finite_horizon_cost_exact(&k, &constant, &policy, 57, 1).unwrap(),
            0.8,
            epsilon = 1e-12
        );
        assert!(finite_horizon_cost_exact(&k, &c, &policy, 0, 0).is_err());
        assert!(finite_horizon_cost_exact(&k, &c, &policy, 5, 2).is_err());
    }

    #[test]
    fn long_horizon_approaches_average_cost() {
        let (k, c) = two_state();
        let policy = StationaryPolicy::Deterministic(vec![1, 0]);
        let chain = policy_kernel(&k, &policy).unwrap();
        let beta = chain.dobrushin();
        let avg = average_cost(&k, &c, &policy, 1e-13).unwrap();
        let t = 10_000;
        let fh = finite_horizon_cost_exact(&k, &c, &policy, t, 0).unwrap();
        let bound = 2.0 * c.c_max() * beta.powf((t as f64).sqrt());
        // transient contributes O(1/T); the β^√T term is far smaller here
        assert!((fh - avg).abs() <= bound + 2.0 * c.c_max() / (t as f64 * (1.0 - beta)));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sampled = finite_horizon_cost_sampled(&k, &c, &policy, 200_000, 0, &mut rng).unwrap();
        assert!((sampled - avg).abs() < 0.01, "{sampled} vs {avg}");
    }

    #[test]
    fn brute_force_examples() {
        let k = FiniteKernel::new(2, 1, vec![0.9, 0.1, 0.2, 0.8]).unwrap();
        let c = CostTable::new(2, 1, vec![0.3, 0.9], 1.0).unwrap();
        let (_, p) = brute_force_optimal(&k, &c).unwrap();
        assert_eq!(p, StationaryPolicy::Deterministic(vec![0, 0]));

        let (k2, _) = two_state();
        let constant = CostTable::constant(2, 2, 0.25, 1.0).unwrap();
        let (j, p) = brute_force_optimal(&k2, &constant).unwrap();
        assert_abs_diff_eq!(j, 0.25, epsilon = 1e-12);
        assert_eq!(p, StationaryPolicy::Deterministic(vec![0, 0]));

        let big = FiniteKernel::uniform(13, 3);
        let c3 = CostTable::constant(13, 3, 0.0, 1.0).unwrap();
        assert!(matches!(brute_force_optimal(&big, &c3), Err(Error::TooLarge(_))));
    }

    #[test]
    fn brute_force_is_minimal_over_sampled_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = FiniteKernel::from_fn(4, 2, |_, _| {
            let raw: Vec<f64> = (0..4).map(|_| rng.gen::<f64>() + 0.05).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|r| r / s).collect()
        })
        .unwrap();
        let c = CostTable::new(4, 2, (0..8).map(|_| rng.gen::<f64>()).collect(), 1.0).unwrap();
        let (j, _) = brute_force_optimal(&k, &c).unwrap();
        for _ in 0..50 {
            let p = StationaryPolicy::Deterministic((0..4).map(|_| rng.gen_range(0..2)).collect());
            assert!(j <= average_cost_exact(&k, &c, &p).unwrap() + 1e-12);
        }
    }

    #[test]
    fn policy_serializes_as_plain_arrays() {
        let det = StationaryPolicy::Deterministic(vec![1, 0, 2]);
        assert_eq!(serde_json::to_string(&det).unwrap(), "[1,0,2]");
        let back: StationaryPolicy = serde_json::from_str("[[0.5,0.5],[1.0,0.0]]").unwrap();
        assert!(matches!(back, StationaryPolicy::Randomized(_)));
    }
}
