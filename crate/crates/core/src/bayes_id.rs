//! ε-partitions of candidate families and Bayesian identification over them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::uniform_bl_distance;
use crate::models::{is_stochastic, CandidateFamily, FiniteSpace};

/// Cover of a candidate family by uniform-BL balls around representatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonNet {
    /// Member index of each bin's representative, in bin order.
    pub representatives: Vec<usize>,
    /// Bin index of each member.
    pub assignment: Vec<usize>,
    pub epsilon: f64,
}

impl EpsilonNet {
    /// One bin per member.
    pub fn singletons(n_members: usize) -> Self {
        EpsilonNet {
            representatives: (0..n_members).collect(),
            assignment: (0..n_members).collect(),
            epsilon: 0.0,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.representatives.len()
    }

    pub fn n_members(&self) -> usize {
        self.assignment.len()
    }
}

/// Greedy cover: members are scanned in order and each joins the first
/// representative within `epsilon`, or opens a new bin.
pub fn build_epsilon_net(
    family: &CandidateFamily,
    epsilon: f64,
    states: &FiniteSpace,
) -> Result<EpsilonNet> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon} must be positive")));
    }
    let mut representatives: Vec<usize> = Vec::new();
    let mut assignment = Vec::with_capacity(family.len());
    for (j, member) in family.members().iter().enumerate() {
        let mut bin = None;
        for (b, &r) in representatives.iter().enumerate() {
            if uniform_bl_distance(family.member(r), member, states)?.value <= epsilon {
                bin = Some(b);
                break;
            }
        }
        let bin = bin.unwrap_or_else(|| {
            representatives.push(j);
            representatives.len() - 1
        });
        assignment.push(bin);
    }
    Ok(EpsilonNet {
        representatives,
        assignment,
        epsilon,
    })
}

/// Posterior weights over family members, with the MAP bin tracked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    pub weights: Vec<f64>,
    pub history_length: usize,
    /// Representative of the heaviest bin (lowest bin index on ties).
    pub map_index: usize,
    pub map_change_count: usize,
    net: EpsilonNet,
}

impl PosteriorState {
    pub fn net(&self) -> &EpsilonNet {
        &self.net
    }

    /// Aggregate posterior mass per bin.
    pub fn bin_weights(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.net.n_bins()];
        for (w, &b) in self.weights.iter().zip(&self.net.assignment) {
            out[b] += w;
        }
        out
    }

    /// Largest bin mass.
    pub fn max_bin_weight(&self) -> f64 {
        self.bin_weights().into_iter().fold(0.0, f64::max)
    }

    /// Posterior mass of the bin containing `member`.
    pub fn bin_mass_of(&self, member: usize) -> f64 {
        self.bin_weights()[self.net.assignment[member]]
    }

    fn map_from_weights(&self) -> usize {
        let bins = self.bin_weights();
        let mut best = 0;
        for (b, &w) in bins.iter().enumerate() {
            if w > bins[best] {
                best = b;
            }
        }
        self.net.representatives[best]
    }

    /// Sets the weights of the listed members to zero and renormalizes.
    pub fn eliminate(&mut self, members: &[usize]) -> Result<()> {
        for &j in members {
            self.weights[j] = 0.0;
        }
        self.renormalize()?;
        self.refresh_map();
        Ok(())
    }

    fn renormalize(&mut self) -> Result<()> {
        let total: f64 = self.weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::PosteriorCollapse);
        }
        self.weights.iter_mut().for_each(|w| *w /= total);
        Ok(())
    }

    fn refresh_map(&mut self) {
        let map = self.map_from_weights();
        if map != self.map_index {
            self.map_index = map;
            self.map_change_count += 1;
        }
    }
}

pub fn init_posterior(prior: &[f64], net: &EpsilonNet) -> Result<PosteriorState> {
    if prior.len() != net.n_members() {
        return Err(Error::LengthMismatch {
            expected: net.n_members(),
            actual: prior.len(),
        });
    }
    if !is_stochastic(prior) {
        return Err(Error::InvalidArgument("prior is not a probability vector".into()));
    }
    let mut state = PosteriorState {
        weights: prior.to_vec(),
        history_length: 0,
        map_index: 0,
        map_change_count: 0,
        net: net.clone(),
    };
    if let Some(bin) = state.bin_weights().iter().position(|&w| w <= 0.0) {
        return Err(Error::ZeroMassBin { bin });
    }
    state.map_index = state.map_from_weights();
    Ok(state)
}

/// Bayes rule on one observed transition `(x, u, x')`.
pub fn posterior_update(
    state: &PosteriorState,
    family: &CandidateFamily,
    obs: (usize, usize, usize),
) -> Result<PosteriorState> {
    let mut next = state.clone();
    absorb(&mut next, family, obs)?;
    Ok(next)
}

/// In-place form of [`posterior_update`].
pub fn absorb(
    state: &mut PosteriorState,
    family: &CandidateFamily,
    (x, u, y): (usize, usize, usize),
) -> Result<()> {
    if family.len() != state.weights.len() {
        return Err(Error::LengthMismatch {
            expected: state.weights.len(),
            actual: family.len(),
        });
    }
    family.member(0).check_indices(x, u)?;
    if y >= family.n_states() {
        return Err(Error::StateOutOfRange {
            index: y,
            n_states: family.n_states(),
        });
    }
    for (w, m) in state.weights.iter_mut().zip(family.members()) {
        *w *= m.row(x, u)[y];
    }
    state.renormalize()?;
    state.history_length += 1;
    state.refresh_map();
    Ok(())
}

pub fn map_estimate(state: &PosteriorState) -> usize {
    state.map_from_weights()
}
