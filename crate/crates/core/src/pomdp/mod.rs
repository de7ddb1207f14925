//! Finite-horizon tabular POMDPs: model, policies, trajectories and exact
//! enumeration-based probability and value computations.
//!
//! Steps are zero-based throughout: a model with horizon `H` has steps
//! `0..H`, transitions `T[h][a]` for `h in 0..H-1` mapping `S_h -> S_{h+1}`,
//! and emissions `O[h]` mapping `S_h -> O_h`. A history of `k` observation-action
//! pairs is followed by the latent state at step `k`.

mod dataset;
mod file;
mod ops;
mod policy;
pub(crate) mod walk;

pub use dataset::{Dataset, Trajectory};
pub use file::PomdpFile;
pub use ops::{
    belief_state, enumerate_trajectories, full_trajectory_probs, history_obs_probs,
    latent_occupancy, latent_value, policy_value, policy_value_mc, sample_trajectory,
    state_marginal, trajectory_l1_distance, trajectory_prob, BeliefVector, TrajectoryProb,
    ValueEstimate,
};
pub use policy::{decode_history, encode_history, Policy, PolicyFile, PolicyKind};
pub use walk::{default_cap, enumeration_size, history_count, CAP_ENV, DEFAULT_CAP};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result, Violation};

/// Tolerance on stochastic-matrix column sums and the initial distribution.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// One observation-action pair of a history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObsAction {
    pub obs: usize,
    pub action: usize,
}

impl ObsAction {
    pub fn new(obs: usize, action: usize) -> Self {
        Self { obs, action }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularPomdp {
    horizon: usize,
    state_counts: Vec<usize>,
    action_count: usize,
    obs_counts: Vec<usize>,
    initial_dist: DVector<f64>,
    transitions: Vec<Vec<DMatrix<f64>>>,
    emissions: Vec<DMatrix<f64>>,
    rewards: Vec<Vec<f64>>,
}

impl TabularPomdp {
    /// Builds and validates a model. `transitions[h][a]` has shape
    /// `|S_{h+1}| x |S_h|`, `emissions[h]` has shape `|O_h| x |S_h|`.
    pub fn new(
        state_counts: Vec<usize>,
        action_count: usize,
        obs_counts: Vec<usize>,
        initial_dist: Vec<f64>,
        transitions: Vec<Vec<DMatrix<f64>>>,
        emissions: Vec<DMatrix<f64>>,
        rewards: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let model = Self {
            horizon: state_counts.len(),
            state_counts,
            action_count,
            obs_counts,
            initial_dist: DVector::from_vec(initial_dist),
            transitions,
            emissions,
            rewards,
        };
        let violations = model.violations();
        if violations.is_empty() {
            Ok(model)
        } else {
            Err(Error::Invalid(violations))
        }
    }

    /// Every structural and stochasticity violation, in a stable order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let h = self.horizon;
        if h == 0 {
            out.push(Violation::Shape("horizon must be positive".into()));
            return out;
        }
        if self.action_count == 0 {
            out.push(Violation::Shape("action_count must be positive".into()));
        }
        if self.obs_counts.len() != h {
            out.push(Violation::Shape(format!(
                "obs_counts has {} entries, expected {h}",
                self.obs_counts.len()
            )));
        }
        if self.state_counts.contains(&0) || self.obs_counts.contains(&0) {
            out.push(Violation::Shape("state and observation counts must be positive".into()));
        }
        if self.transitions.len() != h - 1 {
            out.push(Violation::Shape(format!(
                "transitions has {} steps, expected {}",
                self.transitions.len(),
                h - 1
            )));
        }
        if self.emissions.len() != h || self.rewards.len() != h {
            out.push(Violation::Shape(format!("emissions and rewards need {h} steps")));
        }
        if !out.is_empty() {
            return out;
        }

        if self.initial_dist.len() != self.state_counts[0] {
            out.push(Violation::Shape(format!(
                "initial_dist has length {}, expected {}",
                self.initial_dist.len(),
                self.state_counts[0]
            )));
        } else {
            for (s, &v) in self.initial_dist.iter().enumerate() {
                if v < 0.0 || !v.is_finite() {
                    out.push(Violation::InitialEntry { state: s, value: v });
                }
            }
            let sum = self.initial_dist.sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                out.push(Violation::InitialDist { sum });
            }
        }

        for (step, per_action) in self.transitions.iter().enumerate() {
            if per_action.len() != self.action_count {
                out.push(Violation::Shape(format!(
                    "transitions[{step}] has {} actions, expected {}",
                    per_action.len(),
                    self.action_count
                )));
                continue;
            }
            for (action, t) in per_action.iter().enumerate() {
                let shape = (self.state_counts[step + 1], self.state_counts[step]);
                if t.shape() != shape {
                    out.push(Violation::Shape(format!(
                        "transitions[{step}][{action}] has shape {:?}, expected {shape:?}",
                        t.shape()
                    )));
                    continue;
                }
                for (state, col) in t.column_iter().enumerate() {
                    for (next, &v) in col.iter().enumerate() {
                        if v < 0.0 || !v.is_finite() {
                            out.push(Violation::TransitionEntry { step, action, next, state, value: v });
                        }
                    }
                    let sum = col.sum();
                    if (sum - 1.0).abs() > STOCHASTIC_TOL {
                        out.push(Violation::TransitionColumn { step, action, state, sum });
                    }
                }
            }
        }

        for (step, e) in self.emissions.iter().enumerate() {
            let shape = (self.obs_counts[step], self.state_counts[step]);
            if e.shape() != shape {
                out.push(Violation::Shape(format!(
                    "emissions[{step}] has shape {:?}, expected {shape:?}",
                    e.shape()
                )));
                continue;
            }
            for (state, col) in e.column_iter().enumerate() {
                for (obs, &v) in col.iter().enumerate() {
                    if v < 0.0 || !v.is_finite() {
                        out.push(Violation::EmissionEntry { step, obs, state, value: v });
                    }
                }
                let sum = col.sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    out.push(Violation::EmissionColumn { step, state, sum });
                }
            }
        }

        for (step, r) in self.rewards.iter().enumerate() {
            if r.len() != self.obs_counts[step] {
                out.push(Violation::Shape(format!(
                    "rewards[{step}] has length {}, expected {}",
                    r.len(),
                    self.obs_counts[step]
                )));
                continue;
            }
            for (obs, &v) in r.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    out.push(Violation::Reward { step, obs, value: v });
                }
            }
        }
        out
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn state_count(&self, step: usize) -> usize {
        self.state_counts[step]
    }

    pub fn state_counts(&self) -> &[usize] {
        &self.state_counts
    }

    pub fn obs_count(&self, step: usize) -> usize {
        self.obs_counts[step]
    }

    pub fn obs_counts(&self) -> &[usize] {
        &self.obs_counts
    }

    pub fn initial_dist(&self) -> &DVector<f64> {
        &self.initial_dist
    }

    /// `T_{h,a}` with `[T]_{ij} = P(s_{h+1} = i | s_h = j, a)`.
    pub fn transition(&self, step: usize, action: usize) -> &DMatrix<f64> {
        &self.transitions[step][action]
    }

    /// `O_h` with `[O]_{oj} = P(o_h = o | s_h = j)`.
    pub fn emission(&self, step: usize) -> &DMatrix<f64> {
        &self.emissions[step]
    }

    pub fn reward(&self, step: usize, obs: usize) -> f64 {
        self.rewards[step][obs]
    }

    pub fn rewards(&self) -> &[Vec<f64>] {
        &self.rewards
    }

    /// True when both models share horizon, action count and observation spaces,
    /// which is what a model class requires.
    pub fn same_observables(&self, other: &TabularPomdp) -> bool {
        self.horizon == other.horizon
            && self.action_count == other.action_count
            && self.obs_counts == other.obs_counts
    }

    /// Checks that a history's indices are in range for this model.
    pub fn check_history(&self, history: &[ObsAction]) -> Result<()> {
        if history.len() > self.horizon {
            return Err(Error::Structural(format!(
                "history of length {} exceeds horizon {}",
                history.len(),
                self.horizon
            )));
        }
        for (k, step) in history.iter().enumerate() {
            if step.obs >= self.obs_counts[k] || step.action >= self.action_count {
                return Err(Error::Structural(format!(
                    "step {k}: (o={}, a={}) out of range (|O|={}, A={})",
                    step.obs, step.action, self.obs_counts[k], self.action_count
                )));
            }
        }
        Ok(())
    }
}
