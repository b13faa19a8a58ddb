//! Distances between probability vectors and between kernels.
//!
//! Total variation follows the `2·sup_B |μ(B) − ν(B)|` convention, i.e. it is
//! the plain `ℓ¹` distance and ranges over `[0, 2]`. Many libraries report half
//! of this value.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{FiniteKernel, FiniteSpace};

/// A distance value and, when meaningful, the index pair attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub value: f64,
    pub witness: Option<[usize; 2]>,
}

impl MetricReport {
    pub fn zero() -> Self {
        MetricReport {
            value: 0.0,
            witness: None,
        }
    }

    pub fn with_witness(value: f64, a: usize, b: usize) -> Self {
        MetricReport {
            value,
            witness: Some([a, b]),
        }
    }
}

fn check_lengths(mu: &[f64], nu: &[f64]) -> Result<()> {
    if mu.len() != nu.len() {
        return Err(Error::LengthMismatch {
            expected: mu.len(),
            actual: nu.len(),
        });
    }
    Ok(())
}

/// `Σ_i |μ_i − ν_i|`.
pub fn tv_distance(mu: &[f64], nu: &[f64]) -> Result<f64> {
    check_lengths(mu, nu)?;
    Ok(l1(mu, nu))
}

#[inline]
pub(crate) fn l1(mu: &[f64], nu: &[f64]) -> f64 {
    mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum()
}

/// Bounded-Lipschitz distance `sup { Σ f_i(μ_i − ν_i) : ‖f‖_∞ + Lip(f) ≤ 1 }`.
///
/// Solved as the linear program over `(f, t)`:
///
/// ```text
/// maximize   Σ f_i (μ_i − ν_i)
/// subject to |f_i| ≤ t,  |f_i − f_j| ≤ (1 − t)·d_ij,  0 ≤ t ≤ 1
/// ```
///
/// Points where `μ_i = ν_i` are dropped first: any feasible `f` on the rest
/// extends to them without raising `‖f‖_∞` or `Lip(f)`.
pub fn bl_distance(mu: &[f64], nu: &[f64], space: &FiniteSpace) -> Result<f64> {
    check_lengths(mu, nu)?;
    if mu.len() != space.len() {
        return Err(Error::LengthMismatch {
            expected: space.len(),
            actual: mu.len(),
        });
    }
    let active: Vec<usize> = (0..mu.len()).filter(|&i| mu[i] != nu[i]).collect();
    if active.is_empty() {
        return Ok(0.0);
    }

    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let t = lp.add_var(0.0, (0.0, 1.0));
    let f: Vec<_> = active
        .iter()
        .map(|&i| lp.add_var(mu[i] - nu[i], (-1.0, 1.0)))
        .collect();
    for &fi in &f {
        lp.add_constraint([(fi, 1.0), (t, -1.0)], ComparisonOp::Le, 0.0);
        lp.add_constraint([(fi, -1.0), (t, -1.0)], ComparisonOp::Le, 0.0);
    }
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            if a == b {
                continue;
            }
            let d = space.distance(i, j);
            // f_i − f_j + d·t ≤ d
            lp.add_constraint([(f[a], 1.0), (f[b], -1.0), (t, d)], ComparisonOp::Le, d);
        }
    }
    let solution = lp
        .solve()
        .map_err(|e| Error::LinearProgram(e.to_string()))?
        .into_solution()
        .map_err(|e| Error::LinearProgram(format!("{e:?}")))?;
    let value = solution.objective();
    if !value.is_finite() {
        return Err(Error::LinearProgram(format!("non-finite optimum {value}")));
    }
    Ok(value.clamp(0.0, l1(mu, nu)))
}

fn check_same_shape(k1: &FiniteKernel, k2: &FiniteKernel) -> Result<()> {
    if !k1.same_shape(k2) {
        return Err(Error::ShapeMismatch(format!(
            "({}, {}) vs ({}, {})",
            k1.n_states(),
            k1.n_actions(),
            k2.n_states(),
            k2.n_actions()
        )));
    }
    Ok(())
}

/// `max_{x,u} ρ_BL(k1(·|x,u), k2(·|x,u))`; the witness is `[x, u]`.
pub fn uniform_bl_distance(
    k1: &FiniteKernel,
    k2: &FiniteKernel,
    states: &FiniteSpace,
) -> Result<MetricReport> {
    check_same_shape(k1, k2)?;
    let mut best = MetricReport::zero();
    for x in 0..k1.n_states() {
        for u in 0..k1.n_actions() {
            let d = bl_distance(k1.row(x, u), k2.row(x, u), states)?;
            if d > best.value || best.witness.is_none() {
                best = MetricReport::with_witness(d, x, u);
            }
        }
    }
    Ok(best)
}

/// `max_{x,u} ‖k1(·|x,u) − k2(·|x,u)‖_TV`; the witness is `[x, u]`.
pub fn uniform_tv_distance(k1: &FiniteKernel, k2: &FiniteKernel) -> Result<MetricReport> {
    check_same_shape(k1, k2)?;
    let mut best = MetricReport::zero();
    for x in 0..k1.n_states() {
        for u in 0..k1.n_actions() {
            let d = l1(k1.row(x, u), k2.row(x, u));
            if d > best.value || best.witness.is_none() {
                best = MetricReport::with_witness(d, x, u);
            }
        }
    }
    Ok(best)
}

/// Half the largest TV distance between any two rows; the witness holds the
/// flat row indices `x·n_actions + u`.
pub fn dobrushin_coefficient(k: &FiniteKernel) -> MetricReport {
    let rows: Vec<&[f64]> = k.rows().collect();
    let mut best = MetricReport::zero();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let d = 0.5 * l1(rows[i], rows[j]);
            if d > best.value {
                best = MetricReport::with_witness(d, i, j);
            }
        }
    }
    best.value = best.value.min(1.0);
    best
}

/// Same coefficient for a square state-to-state stochastic matrix.
pub fn dobrushin_of_matrix(p: &[f64], n: usize) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            best = best.max(0.5 * l1(&p[i * n..(i + 1) * n], &p[j * n..(j + 1) * n]));
        }
    }
    best.min(1.0)
}

/// `min_{x,u,y} (k(y|x,u) − λ(y))`; nonnegative iff `k ≥ λ` row-wise.
pub fn minorization_margin(k: &FiniteKernel, lambda: &[f64]) -> Result<f64> {
    if lambda.len() != k.n_states() {
        return Err(Error::LengthMismatch {
            expected: k.n_states(),
            actual: lambda.len(),
        });
    }
    Ok(k.rows()
        .flat_map(|row| row.iter().zip(lambda).map(|(p, l)| p - l))
        .fold(f64::INFINITY, f64::min))
}
