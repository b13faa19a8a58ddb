//! State/action spaces, costs, and transition kernels.
//!
//! Two kinds of dynamics live here: [`FiniteKernel`], a row-stochastic table
//! indexed by `(state, action)`, and [`ContinuousModel`], the benchmark
//! wrapped-affine system on `[0, 1)`
//!
//! ```text
//! x' = (a·x + b·u + w) mod 1,   w ~ p_full·U[0,1) + (1 − p_full)·U[0,σ)
//! ```
//!
//! whose bin masses are available in closed form. The uniform component makes
//! every kernel row dominate `p_full·Lebesgue`, so the Dobrushin coefficient is
//! at most `1 − p_full`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{bl_distance, MetricReport};

/// Row-sum and sign tolerance for stochastic vectors.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Distance conventions for points embedded in `[0, 1]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LineMetric {
    #[default]
    Euclidean,
    /// Wrap-around distance `min(|x − y|, 1 − |x − y|)` per coordinate.
    Circle,
}

/// A finite set of points in `[0, 1]^d` with its distance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSpace {
    points: Vec<Vec<f64>>,
    dist: Vec<f64>,
}

impl FiniteSpace {
    /// Builds a space from coordinates, computing distances under `metric`.
    pub fn from_points(points: Vec<Vec<f64>>, metric: LineMetric) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty space".into()));
        }
        let dim = points[0].len();
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "dimension {dim} not supported (1 or 2)"
            )));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidArgument("points of mixed dimension".into()));
        }
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                dist[i * n + j] = point_distance(&points[i], &points[j], metric);
            }
        }
        Ok(FiniteSpace { points, dist })
    }

    /// Builds a space from an explicit distance table, which must be a metric.
    pub fn with_metric(points: Vec<Vec<f64>>, dist: Vec<f64>) -> Result<Self> {
        let n = points.len();
        if dist.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                actual: dist.len(),
            });
        }
        let space = FiniteSpace { points, dist };
        let problems = space.metric_violations();
        if let Some(first) = problems.first() {
            return Err(Error::InvalidArgument(first.clone()));
        }
        Ok(space)
    }

    /// Centers `(i + 0.5)/n` of the `n` equal bins of `[0, 1)`.
    pub fn unit_interval_centers(n: usize, metric: LineMetric) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        let points = (0..n).map(|i| vec![(i as f64 + 0.5) / n as f64]).collect();
        Self::from_points(points, metric)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.len() + j]
    }

    /// Row-major `n × n` distance table.
    pub fn distances(&self) -> &[f64] {
        &self.dist
    }

    /// Symmetry, zero diagonal, nonnegativity and triangle inequality (1e-12).
    pub fn metric_violations(&self) -> Vec<String> {
        metric_table_violations(&self.dist, self.len())
    }
}

pub(crate) fn metric_table_violations(dist: &[f64], n: usize) -> Vec<String> {
    let mut out = Vec::new();
    let d = |i: usize, j: usize| dist[i * n + j];
    for i in 0..n {
        if d(i, i) != 0.0 {
            out.push(format!("nonzero diagonal at {i}"));
        }
        for j in 0..n {
            if !(d(i, j) >= 0.0) || !d(i, j).is_finite() {
                out.push(format!("invalid distance at ({i}, {j})"));
            }
            if d(i, j) != d(j, i) {
                out.push(format!("asymmetric distance at ({i}, {j})"));
            }
            for k in 0..n {
                if d(i, k) > d(i, j) + d(j, k) + 1e-12 {
                    out.push(format!("triangle inequality fails for ({i}, {j}, {k})"));
                }
            }
        }
    }
    out
}

pub(crate) fn point_distance(p: &[f64], q: &[f64], metric: LineMetric) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| {
            let d = (a - b).abs();
            match metric {
                LineMetric::Euclidean => d,
                LineMetric::Circle => d.min(1.0 - d),
            }
        })
        .map(|d| d * d)
        .sum::<f64>()
        .sqrt()
}

/// Row-stochastic transition table over `n_states × n_actions`.
///
/// Rows are stored contiguously: the distribution of the next state given
/// `(x, u)` is `data[(x·n_actions + u)·n_states ..][..n_states]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteKernel {
    n_states: usize,
    n_actions: usize,
    data: Vec<f64>,
}

/// A row that is not a probability vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelViolation {
    pub state: usize,
    pub action: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ViolationKind {
    RowSum { sum: f64 },
    Negative { next_state: usize, value: f64 },
    NonFinite { next_state: usize },
}

impl std::fmt::Display for KernelViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            ViolationKind::RowSum { sum } => write!(
                f,
                "row (state {}, action {}) sums to {sum}",
                self.state, self.action
            ),
            ViolationKind::Negative { next_state, value } => write!(
                f,
                "row (state {}, action {}) has negative entry {value} at {next_state}",
                self.state, self.action
            ),
            ViolationKind::NonFinite { next_state } => write!(
                f,
                "row (state {}, action {}) has non-finite entry at {next_state}",
                self.state, self.action
            ),
        }
    }
}

impl FiniteKernel {
    /// Builds a kernel, rejecting any row that is not a probability vector.
    pub fn new(n_states: usize, n_actions: usize, data: Vec<f64>) -> Result<Self> {
        let k = Self::from_raw(n_states, n_actions, data)?;
        let violations = validate_kernel(&k);
        if let Some(v) = violations.first() {
            return Err(Error::InvalidKernel(v.to_string()));
        }
        Ok(k)
    }

    /// Shape-checked only; use [`validate_kernel`] to inspect the rows.
    pub fn from_raw(n_states: usize, n_actions: usize, data: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::ShapeMismatch("empty kernel".into()));
        }
        let expected = n_states * n_actions * n_states;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(FiniteKernel {
            n_states,
            n_actions,
            data,
        })
    }

    /// Kernel whose every row is uniform over states.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_states as f64;
        FiniteKernel {
            n_states,
            n_actions,
            data: vec![p; n_states * n_actions * n_states],
        }
    }

    /// Builds a kernel row by row from `f(state, action) -> distribution`.
    pub fn from_fn(
        n_states: usize,
        n_actions: usize,
        mut f: impl FnMut(usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(n_states * n_actions * n_states);
        for x in 0..n_states {
            for u in 0..n_actions {
                let row = f(x, u);
                if row.len() != n_states {
                    return Err(Error::LengthMismatch {
                        expected: n_states,
                        actual: row.len(),
                    });
                }
                data.extend(row);
            }
        }
        Self::new(n_states, n_actions, data)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_rows(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, x: usize, u: usize) -> &[f64] {
        let start = (x * self.n_actions + u) * self.n_states;
        &self.data[start..start + self.n_states]
    }

    /// Row by flat index `x·n_actions + u`.
    pub fn row_flat(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_states..(r + 1) * self.n_states]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_states)
    }

    /// Overwrites one row. The new row must be a probability vector.
    pub fn set_row(&mut self, x: usize, u: usize, row: &[f64]) -> Result<()> {
        self.check_indices(x, u)?;
        if row.len() != self.n_states {
            return Err(Error::LengthMismatch {
                expected: self.n_states,
                actual: row.len(),
            });
        }
        if let Some(kind) = row_violation(row) {
            return Err(Error::InvalidKernel(
                KernelViolation {
                    state: x,
                    action: u,
                    kind,
                }
                .to_string(),
            ));
        }
        let start = (x * self.n_actions + u) * self.n_states;
        self.data[start..start + self.n_states].copy_from_slice(row);
        Ok(())
    }

    pub fn same_shape(&self, other: &FiniteKernel) -> bool {
        self.n_states == other.n_states && self.n_actions == other.n_actions
    }

    /// Convex combination `(1 − w)·self + w·other`.
    pub fn mix(&self, other: &FiniteKernel, w: f64) -> Result<FiniteKernel> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch(format!(
                "({}, {}) vs ({}, {})",
                self.n_states, self.n_actions, other.n_states, other.n_actions
            )));
        }
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidArgument(format!("weight {w} outside [0, 1]")));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        Ok(FiniteKernel {
            n_states: self.n_states,
            n_actions: self.n_actions,
            data,
        })
    }

    pub fn check_indices(&self, x: usize, u: usize) -> Result<()> {
        if x >= self.n_states {
            return Err(Error::StateOutOfRange {
                index: x,
                n_states: self.n_states,
            });
        }
        if u >= self.n_actions {
            return Err(Error::ActionOutOfRange {
                index: u,
                n_actions: self.n_actions,
            });
        }
        Ok(())
    }

    /// Draws the next state from row `(x, u)`.
    pub fn sample<R: Rng + ?Sized>(&self, x: usize, u: usize, rng: &mut R) -> Result<usize> {
        self.check_indices(x, u)?;
        Ok(sample_index(self.row(x, u), rng))
    }
}

/// Inverse-CDF draw from a probability vector. One uniform variate per call.
pub fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            last_positive = i;
        }
        acc += pi;
        if r < acc {
            return i;
        }
    }
    // rounding left r ≥ Σp
    last_positive
}

fn row_violation(row: &[f64]) -> Option<ViolationKind> {
    for (k, &v) in row.iter().enumerate() {
        if !v.is_finite() {
            return Some(ViolationKind::NonFinite { next_state: k });
        }
    }
    for (k, &v) in row.iter().enumerate() {
        if v < 0.0 {
            return Some(ViolationKind::Negative {
                next_state: k,
                value: v,
            });
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Some(ViolationKind::RowSum { sum });
    }
    None
}

/// Every row that is not a probability vector within [`STOCHASTIC_TOL`].
pub fn validate_kernel(k: &FiniteKernel) -> Vec<KernelViolation> {
    let mut out = Vec::new();
    for x in 0..k.n_states {
        for u in 0..k.n_actions {
            if let Some(kind) = row_violation(k.row(x, u)) {
                out.push(KernelViolation {
                    state: x,
                    action: u,
                    kind,
                });
            }
        }
    }
    out
}

/// True if `p` is a probability vector within [`STOCHASTIC_TOL`].
pub fn is_stochastic(p: &[f64]) -> bool {
    row_violation(p).is_none()
}

/// Half-open interval `[lo, hi)` inside `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi > 1.0 || lo > hi {
            return Err(Error::MalformedInterval { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    /// The `i`-th of `n` equal bins of `[0, 1)`.
    pub fn bin(i: usize, n: usize) -> Self {
        Interval {
            lo: i as f64 / n as f64,
            hi: (i + 1) as f64 / n as f64,
        }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    fn overlap(&self, lo: f64, hi: f64) -> f64 {
        (self.hi.min(hi) - self.lo.max(lo)).max(0.0)
    }
}

/// Wrapped-affine benchmark dynamics on `[0, 1)` with uniform-mixture noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousModel {
    pub a: f64,
    pub b: f64,
    pub p_full: f64,
    pub sigma: f64,
}

impl ContinuousModel {
    pub fn new(a: f64, b: f64, p_full: f64, sigma: f64) -> Result<Self> {
        let m = ContinuousModel {
            a,
            b,
            p_full,
            sigma,
        };
        m.validate()?;
        Ok(m)
    }

    /// The benchmark used throughout the acceptance suite.
    pub fn benchmark() -> Self {
        ContinuousModel {
            a: 1.0,
            b: 0.5,
            p_full: 0.3,
            sigma: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::InvalidArgument("drift coefficients must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.p_full) {
            return Err(Error::InvalidArgument(format!(
                "p_full = {} outside [0, 1]",
                self.p_full
            )));
        }
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma = {} outside (0, 1]",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Start of the narrow-noise arc, `(a·x + b·u) mod 1`.
    fn shift(&self, x: f64, u: f64) -> f64 {
        wrap_unit(self.a * x + self.b * u)
    }

    /// Draws `x'`. Consumes exactly two uniform variates.
    pub fn sample<R: Rng + ?Sized>(&self, x: f64, u: f64, rng: &mut R) -> f64 {
        let coin: f64 = rng.gen();
        let z: f64 = rng.gen();
        let w = if coin < self.p_full { z } else { z * self.sigma };
        wrap_unit(self.a * x + self.b * u + w)
    }

    /// `P(x' ∈ bin | x, u)` by arc overlap of the wrapped uniform mixture.
    pub fn exact_bin_mass(&self, x: f64, u: f64, bin: Interval) -> Result<f64> {
        Interval::new(bin.lo, bin.hi)?;
        let s = self.shift(x, u);
        let end = s + self.sigma;
        let arc = if end <= 1.0 {
            bin.overlap(s, end)
        } else {
            bin.overlap(s, 1.0) + bin.overlap(0.0, end - 1.0)
        };
        Ok(self.p_full * bin.len() + (1.0 - self.p_full) * arc / self.sigma)
    }

    /// Masses of the `n` equal bins of `[0, 1)`.
    pub fn bin_masses(&self, x: f64, u: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| {
                self.exact_bin_mass(x, u, Interval::bin(k, n))
                    .expect("equal bins are well formed")
            })
            .collect()
    }
}

/// `v mod 1` into `[0, 1)`.
pub fn wrap_unit(v: f64) -> f64 {
    let w = v.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Finite cost table `c(x, u)` with an explicit bound `c_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    c_max: f64,
}

impl CostTable {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>, c_max: f64) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::LengthMismatch {
                expected: n_states * n_actions,
                actual: values.len(),
            });
        }
        if !(c_max > 0.0 && c_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("c_max = {c_max} must be positive")));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| !(0.0..=c_max).contains(&v))
        {
            return Err(Error::InvalidArgument(format!(
                "cost {v} at entry {i} outside [0, {c_max}]"
            )));
        }
        Ok(CostTable {
            n_states,
            n_actions,
            values,
            c_max,
        })
    }

    pub fn constant(n_states: usize, n_actions: usize, value: f64, c_max: f64) -> Result<Self> {
        Self::new(n_states, n_actions, vec![value; n_states * n_actions], c_max)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, u: usize) -> f64 {
        self.values[x * self.n_actions + u]
    }

    pub fn matches(&self, k: &FiniteKernel) -> bool {
        self.n_states == k.n_states() && self.n_actions == k.n_actions()
    }
}

/// Closed-form costs on the continuous space `[0, 1) × [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CostModel {
    /// `(1 − w)·min(1, 2|x − target|) + w·u`, bounded by 1.
    Tracking { target: f64, action_weight: f64 },
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::Tracking {
            target: 0.5,
            action_weight: 0.2,
        }
    }
}

impl CostModel {
    pub fn c_max(&self) -> f64 {
        1.0
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CostModel::Tracking {
                target,
                action_weight,
            } => {
                if !(0.0..=1.0).contains(&target) || !(0.0..=1.0).contains(&action_weight) {
                    return Err(Error::InvalidArgument(
                        "tracking cost needs target and action_weight in [0, 1]".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, x: f64, u: f64) -> f64 {
        match *self {
            CostModel::Tracking {
                target,
                action_weight,
            } => {
                let track = (2.0 * (x - target).abs()).min(1.0);
                (1.0 - action_weight) * track + action_weight * u.clamp(0.0, 1.0)
            }
        }
    }

    /// Restriction to the given state and action points.
    pub fn tabulate(&self, states: &[f64], actions: &[f64]) -> CostTable {
        let values = states
            .iter()
            .flat_map(|&x| actions.iter().map(move |&u| (x, u)))
            .map(|(x, u)| self.eval(x, u))
            .collect();
        CostTable::new(states.len(), actions.len(), values, self.c_max())
            .expect("closed-form costs lie in [0, c_max]")
    }
}

/// A finite set of candidate kernels sharing one shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFamily {
    members: Vec<FiniteKernel>,
    labels: Vec<String>,
    true_index: Option<usize>,
}

impl CandidateFamily {
    pub fn new(
        members: Vec<FiniteKernel>,
        labels: Vec<String>,
        true_index: Option<usize>,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("empty candidate family".into()));
        }
        if labels.len() != members.len() {
            return Err(Error::LengthMismatch {
                expected: members.len(),
                actual: labels.len(),
            });
        }
        if let Some(bad) = members.iter().position(|m| !m.same_shape(&members[0])) {
            return Err(Error::ShapeMismatch(format!(
                "member {bad} differs in shape from member 0"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::InvalidArgument(format!("duplicate label `{dup}`")));
        }
        if let Some(t) = true_index {
            if t >= members.len() {
                return Err(Error::InvalidArgument(format!(
                    "true_index {t} out of range for {} members",
                    members.len()
                )));
            }
        }
        Ok(CandidateFamily {
            members,
            labels,
            true_index,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[FiniteKernel] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &FiniteKernel {
        &self.members[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn true_index(&self) -> Option<usize> {
        self.true_index
    }

    pub fn n_states(&self) -> usize {
        self.members[0].n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.members[0].n_actions()
    }
}

/// Empirical equicontinuity modulus of a finite kernel: the largest BL
/// distance between rows whose `(x, u)` grid points lie within `delta`.
///
/// Grid points are `(state, action)` index pairs; their distance is the
/// Euclidean combination of the state and action metrics. Rows are compared
/// under the state metric.
pub fn estimate_bl_modulus_finite(
    k: &FiniteKernel,
    states: &FiniteSpace,
    actions: &FiniteSpace,
    grid: &[(usize, usize)],
    delta: f64,
) -> Result<MetricReport> {
    if states.len() != k.n_states() || actions.len() != k.n_actions() {
        return Err(Error::ShapeMismatch("spaces do not match kernel".into()));
    }
    for &(x, u) in grid {
        k.check_indices(x, u)?;
    }
    let rows: Vec<&[f64]> = grid.iter().map(|&(x, u)| k.row(x, u)).collect();
    let pair_dist = |i: usize, j: usize| {
        let (xi, ui) = grid[i];
        let (xj, uj) = grid[j];
        states.distance(xi, xj).hypot(actions.distance(ui, uj))
    };
    modulus_over_pairs(&rows, pair_dist, delta, states)
}

/// Empirical equicontinuity modulus of the continuous model, with rows
/// represented as bin masses on the equal bins whose centers form `support`.
pub fn estimate_bl_modulus_continuous(
    m: &ContinuousModel,
    grid: &[(f64, f64)],
    delta: f64,
    support: &FiniteSpace,
) -> Result<MetricReport> {
    let n = support.len();
    let rows: Vec<Vec<f64>> = grid.iter().map(|&(x, u)| m.bin_masses(x, u, n)).collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let pair_dist = |i: usize, j: usize| {
        let (xi, ui) = grid[i];
        let (xj, uj) = grid[j];
        (xi - xj).hypot(ui - uj)
    };
    modulus_over_pairs(&refs, pair_dist, delta, support)
}

fn modulus_over_pairs(
    rows: &[&[f64]],
    pair_dist: impl Fn(usize, usize) -> f64,
    delta: f64,
    support: &FiniteSpace,
) -> Result<MetricReport> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} must be ≥ 0")));
    }
    let mut best = MetricReport::zero();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            if pair_dist(i, j) > delta || rows[i] == rows[j] {
                continue;
            }
            let d = bl_distance(rows[i], rows[j], support)?;
            if d > best.value {
                best = MetricReport::with_witness(d, i, j);
            }
        }
    }
    Ok(best)
}
