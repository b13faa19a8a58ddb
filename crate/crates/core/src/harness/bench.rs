//! Benchmark instances shared by the CLI, the experiment runner and tests.

use crate::error::Result;
use crate::models::{CandidateFamily, ContinuousModel, CostModel, FiniteKernel};
use crate::planner::relative_value_iteration;
use crate::quantize::{build_quantized_kernel, KernelMode, QuantizedMdp, Quantizer};

/// Drift values of the default candidate family; the benchmark's `b = 0.5`
/// sits at index 2.
pub const B_SWEEP: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Exact `P_n` of `model` on `n_states × n_actions` equal bins.
pub fn quantized(
    model: &ContinuousModel,
    cost: &CostModel,
    n_states: usize,
    n_actions: usize,
) -> Result<QuantizedMdp> {
    build_quantized_kernel(
        model,
        cost,
        &Quantizer::unit_interval(n_states)?,
        &Quantizer::unit_interval(n_actions)?,
        KernelMode::Exact,
    )
}

/// Optimal average cost of a quantized model.
pub fn optimal_cost(mdp: &QuantizedMdp, tol: f64) -> Result<f64> {
    Ok(relative_value_iteration(&mdp.kernel, &mdp.cost, tol, 1_000_000)?.j_star)
}

/// Quantized kernels of `model` with the drift `b` replaced by each value.
pub fn drift_family(
    model: &ContinuousModel,
    cost: &CostModel,
    n_states: usize,
    n_actions: usize,
    b_values: &[f64],
    true_index: Option<usize>,
) -> Result<CandidateFamily> {
    let members: Vec<FiniteKernel> = b_values
        .iter()
        .map(|&b| {
            let m = ContinuousModel::new(model.a, b, model.p_full, model.sigma)?;
            Ok(quantized(&m, cost, n_states, n_actions)?.kernel)
        })
        .collect::<Result<_>>()?;
    let labels = b_values.iter().map(|b| format!("b={b}")).collect();
    CandidateFamily::new(members, labels, true_index)
}

/// `|j*_n − j*_ref|` for each `n`. Actions use `n_actions` bins, or the
/// same count as states when `None`.
pub fn quantization_trend(
    model: &ContinuousModel,
    cost: &CostModel,
    ns: &[usize],
    n_ref: usize,
    n_actions: Option<usize>,
    tol: f64,
) -> Result<Vec<(usize, f64)>> {
    let solve = |n: usize| optimal_cost(&quantized(model, cost, n, n_actions.unwrap_or(n))?, tol);
    let j_ref = solve(n_ref)?;
    ns.iter()
        .map(|&n| {
            let j = solve(n)?;
            Ok((n, (j - j_ref).abs()))
        })
        .collect()
}
