//! Whitespace-separated data files for external plotting tools.
//!
//! Every file starts with `#` comment lines naming the quantity and the
//! columns. Per-seed traces have two columns `(t, y)`; multi-seed band files
//! have `t mean min max n`, `n` counting the seeds with a value at `t`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::record::RunRecord;

/// Rows kept per trace after thinning.
pub const PLOT_POINTS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    /// Running average cost.
    CostTrace,
    /// Max-row TV error of the current estimate.
    EstErr,
    /// Posterior mass of the true candidate.
    PosteriorMass,
}

impl TraceKind {
    pub fn name(self) -> &'static str {
        match self {
            TraceKind::CostTrace => "cost_trace",
            TraceKind::EstErr => "est_err",
            TraceKind::PosteriorMass => "posterior_mass",
        }
    }

    fn column(self) -> &'static str {
        match self {
            TraceKind::CostTrace => "avg_cost",
            TraceKind::EstErr => "est_err_tv",
            TraceKind::PosteriorMass => "posterior_mass",
        }
    }

    fn series(self, rec: &RunRecord) -> Vec<(usize, f64)> {
        match self {
            TraceKind::CostTrace => rec.rows.iter().map(|r| (r.t, r.avg_cost)).collect(),
            TraceKind::EstErr => rec
                .rows
                .iter()
                .filter_map(|r| r.est_err_tv.map(|e| (r.t, e)))
                .collect(),
            TraceKind::PosteriorMass => rec
                .rows
                .iter()
                .zip(&rec.posterior_mass)
                .map(|(r, &m)| (r.t, m))
                .collect(),
        }
    }
}

pub enum PlotData<'a> {
    Runs {
        kind: TraceKind,
        records: &'a [RunRecord],
    },
    /// `(n, |j*_n − j*_ref|)` pairs.
    QuantizationTrend {
        points: &'a [(usize, f64)],
        n_ref: usize,
    },
}

/// Writes the data files for `data` into `dir` and returns their paths.
/// One record gives `<kind>.dat`; several give `<kind>_seed<s>.dat` per
/// record plus `<kind>_band.dat`. Records without data for the kind are
/// skipped.
pub fn emit_plot_data(data: &PlotData<'_>, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    match data {
        PlotData::QuantizationTrend { points, n_ref } => {
            let mut text = format!("# quantization_trend: |j*_n - j*_{n_ref}|\n# columns: n abs_gap\n");
            for (n, gap) in points.iter() {
                writeln!(text, "{n} {gap}").unwrap();
            }
            let path = dir.join("quantization_trend.dat");
            std::fs::write(&path, text)?;
            Ok(vec![path])
        }
        PlotData::Runs { kind, records } => emit_traces(*kind, records, dir),
    }
}

fn emit_traces(kind: TraceKind, records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    let traces: Vec<(String, Vec<(usize, f64)>)> = records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let label = rec
                .summary
                .as_ref()
                .map_or_else(|| format!("run{i}"), |s| format!("seed{}", s.seed));
            (label, kind.series(&rec.thin(PLOT_POINTS)))
        })
        .filter(|(_, s)| !s.is_empty())
        .collect();
    let name = kind.name();
    let mut written = Vec::new();
    if traces.len() == 1 {
        let path = dir.join(format!("{name}.dat"));
        std::fs::write(&path, two_column(kind, &traces[0].0, &traces[0].1))?;
        written.push(path);
        return Ok(written);
    }
    let mut band: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (label, series) in &traces {
        let path = dir.join(format!("{name}_{label}.dat"));
        std::fs::write(&path, two_column(kind, label, series))?;
        written.push(path);
        for &(t, y) in series {
            band.entry(t).or_default().push(y);
        }
    }
    if !traces.is_empty() {
        let mut text = format!(
            "# {name}: {} over {} runs\n# columns: t mean min max n\n",
            kind.column(),
            traces.len()
        );
        for (t, ys) in &band {
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
            let max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            writeln!(text, "{t} {mean} {min} {max} {}", ys.len()).unwrap();
        }
        let path = dir.join(format!("{name}_band.dat"));
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

fn two_column(kind: TraceKind, label: &str, series: &[(usize, f64)]) -> String {
    let mut text = format!(
        "# {}: {label}\n# columns: t {}\n",
        kind.name(),
        kind.column()
    );
    for (t, y) in series {
        writeln!(text, "{t} {y}").unwrap();
    }
    text
}
