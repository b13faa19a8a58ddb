//! Per-step traces and summaries of adaptive runs.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::FiniteKernel;

/// One row of the step CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub t: usize,
    pub state: usize,
    pub action: usize,
    pub cost: f64,
    pub avg_cost: f64,
    pub explore_flag: u8,
    pub est_err_tv: Option<f64>,
    pub map_index: Option<usize>,
    pub phase: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: String,
    pub seed: u64,
    pub steps: usize,
    pub final_avg_cost: f64,
    pub j_star: Option<f64>,
    /// `final_avg_cost − j_star`.
    pub gap: Option<f64>,
    pub trailing_window: usize,
    pub trailing_avg_cost: f64,
    /// First step after which the estimate (or MAP index) never changed.
    pub stabilization_step: Option<usize>,
}

/// Estimator snapshot taken after `t` transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: usize,
    pub est_err_tv: Option<f64>,
    pub kernel: FiniteKernel,
}

/// Outcome of the Dobrushin gate at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub t: usize,
    pub coefficient: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleStat {
    pub cycle: usize,
    pub map_index: usize,
    pub exploit_avg_cost: f64,
    pub cumulative_avg_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseStart {
    pub phase: usize,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub rows: Vec<StepRow>,
    pub checkpoints: Vec<Checkpoint>,
    pub gate: Vec<GateDecision>,
    pub cycles: Vec<CycleStat>,
    pub phases: Vec<PhaseStart>,
    /// MAP change count before each step's exploration draw.
    pub k_trace: Vec<usize>,
    /// Posterior mass of the true candidate (or of the MAP when the truth is
    /// unknown) after each step. Empty for the empirical algorithms.
    pub posterior_mass: Vec<f64>,
    pub summary: Option<RunSummary>,
    cost_sum: f64,
}

impl RunRecord {
    pub fn with_capacity(n: usize) -> Self {
        RunRecord {
            rows: Vec::with_capacity(n),
            ..Default::default()
        }
    }

    /// Appends a step; `avg_cost` is filled from the running mean.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn push(
        &mut self,
        state: usize,
        action: usize,
        cost: f64,
        explore: bool,
        est_err_tv: Option<f64>,
        map_index: Option<usize>,
        phase: Option<usize>,
    ) {
        let t = self.rows.len();
        self.cost_sum += cost;
        let avg_cost = self.cost_sum / (t + 1) as f64;
        self.rows.push(StepRow {
            t,
            state,
            action,
            cost,
            avg_cost,
            explore_flag: u8::from(explore),
            est_err_tv,
            map_index,
            phase,
        });
    }

    /// Record holding the given rows; `avg_cost` is recomputed.
    pub fn from_rows(rows: Vec<StepRow>) -> Self {
        let mut rec = RunRecord::with_capacity(rows.len());
        for r in rows {
            rec.push(
                r.state,
                r.action,
                r.cost,
                r.explore_flag == 1,
                r.est_err_tv,
                r.map_index,
                r.phase,
            );
        }
        rec
    }

    /// At most `max_points` evenly spaced rows, always keeping the last one.
    /// Rows keep their original `t`; the posterior trace is thinned alike.
    pub fn thin(&self, max_points: usize) -> RunRecord {
        let n = self.rows.len();
        let stride = n.div_ceil(max_points.max(1)).max(1);
        let keep: Vec<usize> = (0..n)
            .filter(|&i| (i + 1) % stride == 0 || i + 1 == n)
            .collect();
        RunRecord {
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
            posterior_mass: if self.posterior_mass.len() == n {
                keep.iter().map(|&i| self.posterior_mass[i]).collect()
            } else {
                Vec::new()
            },
            checkpoints: self.checkpoints.clone(),
            summary: self.summary.clone(),
            cost_sum: self.cost_sum,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn final_avg_cost(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.avg_cost)
    }

    /// Mean cost over the last `window` steps.
    pub fn trailing_avg_cost(&self, window: usize) -> f64 {
        let w = window.min(self.rows.len()).max(1);
        let tail = &self.rows[self.rows.len().saturating_sub(w)..];
        tail.iter().map(|r| r.cost).sum::<f64>() / tail.len().max(1) as f64
    }

    /// Fills in the summary from the recorded rows.
    pub fn finish(
        &mut self,
        strategy: &str,
        seed: u64,
        j_star: Option<f64>,
        trailing_window: usize,
        stabilization_step: Option<usize>,
    ) {
        let final_avg_cost = self.final_avg_cost();
        self.summary = Some(RunSummary {
            strategy: strategy.to_string(),
            seed,
            steps: self.rows.len(),
            final_avg_cost,
            j_star,
            gap: j_star.map(|j| final_avg_cost - j),
            trailing_window,
            trailing_avg_cost: self.trailing_avg_cost(trailing_window),
            stabilization_step,
        });
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(f)
    }
}

/// Reads a step CSV written by [`RunRecord::write_csv`].
pub fn read_step_csv(path: &Path) -> Result<Vec<StepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}
