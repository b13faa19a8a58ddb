//! Posterior weights streamed along a recorded trajectory.

use std::io::Write;
use std::path::Path;

use crate::bayes_id::{absorb, init_posterior, EpsilonNet, PosteriorState};
use crate::error::{Error, Result};
use crate::models::CandidateFamily;

/// `(state, action)` pairs from a CSV with `state` and `action` columns,
/// such as a step CSV. Consecutive rows form the observed transitions.
pub fn read_trajectory(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::InvalidArgument(format!("{}: no `{name}` column", path.display()))
        })
    };
    let (xs, us) = (column("state")?, column("action")?);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |c: usize| {
            rec.get(c)
                .and_then(|v| v.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::InvalidArgument(format!("row {i}: bad index in column {c}")))
        };
        out.push((parse(xs)?, parse(us)?));
    }
    Ok(out)
}

/// Feeds every transition of `trajectory` to the posterior and writes one
/// CSV row per step: `t, w_0 … w_{K−1}, map_index, map_change_count`.
/// Row `t` holds the posterior after `t` transitions, starting from the prior.
pub fn write_posterior_weights<W: Write>(
    family: &CandidateFamily,
    prior: &[f64],
    trajectory: &[(usize, usize)],
    out: W,
) -> Result<PosteriorState> {
    let mut state = init_posterior(prior, &EpsilonNet::singletons(family.len()))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..family.len()).map(|j| format!("w_{j}")));
    header.extend(["map_index".to_string(), "map_change_count".to_string()]);
    w.write_record(&header)?;
    let mut row = |t: usize, s: &PosteriorState| -> Result<()> {
        let mut fields = vec![t.to_string()];
        fields.extend(s.weights.iter().map(f64::to_string));
        fields.push(s.map_index.to_string());
        fields.push(s.map_change_count.to_string());
        w.write_record(&fields)?;
        Ok(())
    };
    row(0, &state)?;
    for (t, pair) in trajectory.windows(2).enumerate() {
        let ((x, u), (y, _)) = (pair[0], pair[1]);
        absorb(&mut state, family, (x, u, y)).map_err(|e| e.at_step(t))?;
        row(t + 1, &state)?;
    }
    w.flush()?;
    Ok(state)
}
