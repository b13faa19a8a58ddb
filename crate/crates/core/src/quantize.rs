//! Nearest-center quantizers and the finite approximate model `P_n`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    CostModel, CostTable, ContinuousModel, FiniteKernel, FiniteSpace, Interval, LineMetric,
};
use crate::planner::StationaryPolicy;

/// Where the centers live.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantizerDomain {
    /// `[0, 1)` with `n` equispaced centers.
    UnitInterval,
    /// `[0, 1)²` with an `n × n` product grid.
    UnitSquare,
    /// An explicit center set; `n` must equal its size.
    Points(FiniteSpace),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Layout {
    Grid1 { n: usize },
    Grid2 { n: usize },
    Points,
}

/// Maps each point to its nearest center, ties to the lowest index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    centers: Vec<Vec<f64>>,
    layout: Layout,
}

fn grid_center(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

/// Nearest of the `n` equispaced centers, lowest index on ties.
fn grid_index(x: f64, n: usize) -> usize {
    let guess = ((x * n as f64).floor().max(0.0) as usize).min(n - 1);
    let lo = guess.saturating_sub(1);
    let hi = (guess + 1).min(n - 1);
    let mut best = lo;
    let mut best_d = (x - grid_center(lo, n)).abs();
    for i in lo + 1..=hi {
        let d = (x - grid_center(i, n)).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

pub fn build_quantizer(domain: &QuantizerDomain, n: usize) -> Result<Quantizer> {
    if n == 0 {
        return Err(Error::InvalidArgument("quantizer needs at least one center".into()));
    }
    Ok(match domain {
        QuantizerDomain::UnitInterval => Quantizer {
            centers: (0..n).map(|i| vec![grid_center(i, n)]).collect(),
            layout: Layout::Grid1 { n },
        },
        QuantizerDomain::UnitSquare => Quantizer {
            centers: (0..n * n)
                .map(|k| vec![grid_center(k / n, n), grid_center(k % n, n)])
                .collect(),
            layout: Layout::Grid2 { n },
        },
        QuantizerDomain::Points(space) => {
            if space.len() != n {
                return Err(Error::LengthMismatch {
                    expected: space.len(),
                    actual: n,
                });
            }
            let dim = space.points()[0].len();
            if !(1..=2).contains(&dim) || space.points().iter().any(|p| p.len() != dim) {
                return Err(Error::InvalidArgument(
                    "center points must share dimension 1 or 2".into(),
                ));
            }
            Quantizer {
                centers: space.points().to_vec(),
                layout: Layout::Points,
            }
        }
    })
}

impl Quantizer {
    /// Shorthand for the 1-d grid on `[0, 1)`.
    pub fn unit_interval(n: usize) -> Result<Self> {
        build_quantizer(&QuantizerDomain::UnitInterval, n)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i]
    }

    /// Scalar centers of a 1-d quantizer.
    pub fn centers_1d(&self) -> Option<Vec<f64>> {
        (self.dim() == 1).then(|| self.centers.iter().map(|c| c[0]).collect())
    }

    /// Bin of a 1-d grid quantizer, as a half-open interval.
    pub fn bin_interval(&self, i: usize) -> Option<Interval> {
        match self.layout {
            Layout::Grid1 { n } if i < n => Some(Interval::bin(i, n)),
            _ => None,
        }
    }

    pub fn is_unit_grid(&self) -> bool {
        matches!(self.layout, Layout::Grid1 { .. })
    }

    /// Index of the nearest center (Euclidean), lowest index on ties.
    pub fn index_of(&self, x: &[f64]) -> usize {
        match self.layout {
            Layout::Grid1 { n } => grid_index(x[0], n),
            Layout::Grid2 { n } => grid_index(x[0], n) * n + grid_index(x[1], n),
            Layout::Points => {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (i, c) in self.centers.iter().enumerate() {
                    let d: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best_d {
                        best = i;
                        best_d = d;
                    }
                }
                best
            }
        }
    }

    /// `index_of` for scalar inputs.
    pub fn index_of_scalar(&self, x: f64) -> usize {
        self.index_of(std::slice::from_ref(&x))
    }

    /// Centers as a metric space.
    pub fn space(&self, metric: LineMetric) -> Result<FiniteSpace> {
        FiniteSpace::from_points(self.centers.clone(), metric)
    }
}

/// How `P_n` rows are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum KernelMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// The finite approximate model built on quantizer centers.
///
/// Each bin is weighted by the point mass at its center, so row `(i, j)` of
/// `kernel` is the law of `Q(x')` started from `(x_i, u_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMdp {
    pub state_quantizer: Quantizer,
    pub action_quantizer: Quantizer,
    pub kernel: FiniteKernel,
    pub cost: CostTable,
    pub mode: KernelMode,
}

impl QuantizedMdp {
    /// `ν(B_i)` of the center-weighted construction measure, `1/n` per bin.
    pub fn weighting(&self) -> Vec<f64> {
        let n = self.state_quantizer.len();
        vec![1.0 / n as f64; n]
    }
}

fn require_unit_grid(q: &Quantizer, what: &str) -> Result<Vec<f64>> {
    if !q.is_unit_grid() {
        return Err(Error::InvalidArgument(format!(
            "{what} quantizer must be the 1-d grid on [0, 1)"
        )));
    }
    Ok(q.centers_1d().expect("grid is 1-d"))
}

pub fn build_quantized_kernel(
    model: &ContinuousModel,
    cost: &CostModel,
    qs: &Quantizer,
    qa: &Quantizer,
    mode: KernelMode,
) -> Result<QuantizedMdp> {
    model.validate()?;
    cost.validate()?;
    let xs = require_unit_grid(qs, "state")?;
    let us = require_unit_grid(qa, "action")?;
    let (n, m) = (xs.len(), us.len());
    let rows: Vec<Vec<f64>> = match mode {
        KernelMode::Exact => (0..n * m)
            .map(|r| model.bin_masses(xs[r / m], us[r % m], n))
            .collect(),
        KernelMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::InvalidArgument(
                    "monte_carlo mode needs samples > 0".into(),
                ));
            }
            (0..n * m)
                .into_par_iter()
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(r as u64);
                    let mut counts = vec![0u64; n];
                    for _ in 0..samples {
                        counts[qs.index_of_scalar(model.sample(xs[r / m], us[r % m], &mut rng))] += 1;
                    }
                    counts.iter().map(|&c| c as f64 / samples as f64).collect()
                })
                .collect()
        }
    };
    // closed-form masses sum to one only up to rounding
    let kernel = normalize_rows(FiniteKernel::from_raw(n, m, rows.concat())?)?;
    Ok(QuantizedMdp {
        state_quantizer: qs.clone(),
        action_quantizer: qa.clone(),
        kernel,
        cost: cost.tabulate(&xs, &us),
        mode,
    })
}

fn normalize_rows(k: FiniteKernel) -> Result<FiniteKernel> {
    let n = k.n_states();
    let mut data = k.data().to_vec();
    for row in data.chunks_mut(n) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= s);
    }
    FiniteKernel::new(n, k.n_actions(), data)
}

/// A finite policy lifted to continuous states, constant on every bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinPolicy {
    quantizer: Quantizer,
    policy: StationaryPolicy,
}

pub fn extend_policy(policy: &StationaryPolicy, qs: &Quantizer) -> Result<BinPolicy> {
    if policy.n_states() != qs.len() {
        return Err(Error::LengthMismatch {
            expected: qs.len(),
            actual: policy.n_states(),
        });
    }
    Ok(BinPolicy {
        quantizer: qs.clone(),
        policy: policy.clone(),
    })
}

impl BinPolicy {
    pub fn policy(&self) -> &StationaryPolicy {
        &self.policy
    }

    /// Action distribution at `x`: the one at the center of `x`'s bin.
    pub fn action_probs(&self, x: &[f64], n_actions: usize) -> Vec<f64> {
        let i = self.quantizer.index_of(x);
        (0..n_actions).map(|u| self.policy.prob(i, u)).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> usize {
        self.policy.sample(self.quantizer.index_of(x), rng)
    }

    /// Action index at `x` for a deterministic underlying policy.
    pub fn action(&self, x: &[f64]) -> Option<usize> {
        match &self.policy {
            StationaryPolicy::Deterministic(a) => Some(a[self.quantizer.index_of(x)]),
            StationaryPolicy::Randomized(_) => None,
        }
    }
}
