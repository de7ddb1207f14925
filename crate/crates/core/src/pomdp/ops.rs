use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use super::walk::{check_cap, env_prob_of, forward, obs_mass, walk_histories, walk_trajectories};
use super::{enumeration_size, history_count, ObsAction, Policy, TabularPomdp, Trajectory};
use crate::error::{Error, Result};

/// `P^π_M(τ) = π(τ)·P_M(τ)` with both factors exposed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryProb {
    pub joint: f64,
    pub env: f64,
    pub policy: f64,
}

/// Probability of the first `up_to` steps of `tau` under `model` and `pi`.
/// When `up_to == H` the final observation is included; otherwise the result is
/// `P(o_0, a_0, …, o_{up_to-1}, a_{up_to-1})`.
pub fn trajectory_prob(
    model: &TabularPomdp,
    pi: &Policy,
    tau: &Trajectory,
    up_to: usize,
) -> Result<TrajectoryProb> {
    if tau.len() != model.horizon() {
        return Err(Error::Structural(format!(
            "trajectory length {} != horizon {}",
            tau.len(),
            model.horizon()
        )));
    }
    if up_to > tau.len() {
        return Err(Error::Structural(format!("up_to {up_to} exceeds horizon {}", tau.len())));
    }
    model.check_history(&tau.steps)?;
    pi.check_against(model)?;
    Ok(prefix_prob(model, pi, &tau.steps[..up_to]))
}

pub(crate) fn prefix_prob(model: &TabularPomdp, pi: &Policy, steps: &[ObsAction]) -> TrajectoryProb {
    let env = env_prob_of(model, steps);
    let policy = pi.sequence_prob(steps);
    TrajectoryProb { joint: env * policy, env, policy }
}

/// Exact `J(π) = E_π[Σ_h R(o_h)]`, summed over enumerated histories.
pub fn policy_value(model: &TabularPomdp, pi: &Policy, cap: u64) -> Result<f64> {
    pi.check_against(model)?;
    check_cap(enumeration_size(model), cap)?;
    let mut total = 0.0;
    walk_histories(model, Some(pi), model.horizon() - 1, true, &mut |node| {
        let k = node.history.len();
        let expected: f64 = (0..model.obs_count(k))
            .map(|o| obs_mass(model, k, o, node.alpha) * model.reward(k, o))
            .sum();
        total += node.policy_prob * expected;
    });
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

/// Monte Carlo `J(π)` with the standard error of the mean.
pub fn policy_value_mc<R: Rng>(
    model: &TabularPomdp,
    pi: &Policy,
    n: usize,
    rng: &mut R,
) -> Result<ValueEstimate> {
    pi.check_against(model)?;
    if n < 2 {
        return Err(Error::Parameter("Monte Carlo mode needs at least 2 samples".into()));
    }
    let returns: Vec<f64> = (0..n).map(|_| sample_trajectory(model, pi, rng).ret()).collect();
    let mean = returns.iter().sum::<f64>() / n as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(ValueEstimate { mean, std_err: (var / n as f64).sqrt(), n })
}

pub(crate) fn sample_index<R: Rng>(probs: impl IntoIterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.into_iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Draws one episode from the generative process.
pub fn sample_trajectory<R: Rng>(model: &TabularPomdp, pi: &Policy, rng: &mut R) -> Trajectory {
    let h = model.horizon();
    let mut steps = Vec::with_capacity(h);
    let mut rewards = Vec::with_capacity(h);
    let mut s = sample_index(model.initial_dist().iter().copied(), rng);
    for k in 0..h {
        let o = sample_index(model.emission(k).column(s).iter().copied(), rng);
        let a = sample_index(pi.action_probs(&steps, o).iter().copied(), rng);
        steps.push(ObsAction::new(o, a));
        rewards.push(model.reward(k, o));
        if k + 1 < h {
            s = sample_index(model.transition(k, a).column(s).iter().copied(), rng);
        }
    }
    Trajectory { steps, rewards }
}

/// Posterior over the latent state following a history.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefVector {
    /// Number of observation-action pairs conditioned on; the belief is over `S_step`.
    pub step: usize,
    pub values: DVector<f64>,
}

/// `b_S(τ)`: the distribution of `s_k` given `k` pairs, not conditioning on `o_k`.
pub fn belief_state(model: &TabularPomdp, history: &[ObsAction]) -> Result<BeliefVector> {
    if history.len() >= model.horizon() {
        return Err(Error::Structural(format!(
            "belief needs a history shorter than the horizon ({} >= {})",
            history.len(),
            model.horizon()
        )));
    }
    model.check_history(history)?;
    let alpha = forward(model, history);
    let total: f64 = alpha.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroProbabilityHistory);
    }
    Ok(BeliefVector {
        step: history.len(),
        values: DVector::from_iterator(alpha.len(), alpha.iter().map(|x| x / total)),
    })
}

/// `d^π_h(s, a)` as an `|S_h| x A` matrix.
pub fn latent_occupancy(model: &TabularPomdp, pi: &Policy, h: usize, cap: u64) -> Result<DMatrix<f64>> {
    pi.check_against(model)?;
    if h >= model.horizon() {
        return Err(Error::Parameter(format!("step {h} >= horizon {}", model.horizon())));
    }
    let a_count = model.action_count();
    let mut out = DMatrix::zeros(model.state_count(h), a_count);
    if pi.is_memoryless() {
        let mut mu: Vec<f64> = model.initial_dist().iter().copied().collect();
        for k in 0..h {
            let mut next = vec![0.0; model.state_count(k + 1)];
            let e = model.emission(k);
            for (s, &m) in mu.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                for o in 0..model.obs_count(k) {
                    let w = m * e[(o, s)];
                    if w == 0.0 {
                        continue;
                    }
                    for (a, &pa) in pi.memoryless_probs(k, o).iter().enumerate() {
                        if pa == 0.0 {
                            continue;
                        }
                        for (dst, &t) in next.iter_mut().zip(model.transition(k, a).column(s).iter()) {
                            *dst += w * pa * t;
                        }
                    }
                }
            }
            mu = next;
        }
        let e = model.emission(h);
        for (s, &m) in mu.iter().enumerate() {
            for o in 0..model.obs_count(h) {
                for (a, &pa) in pi.memoryless_probs(h, o).iter().enumerate() {
                    out[(s, a)] += m * e[(o, s)] * pa;
                }
            }
        }
    } else {
        check_cap(history_count(model, h + 1), cap)?;
        let e = model.emission(h);
        walk_histories(model, Some(pi), h, true, &mut |node| {
            if node.history.len() != h {
                return;
            }
            for o in 0..model.obs_count(h) {
                let probs = pi.action_probs(node.history, o);
                for (s, &x) in node.alpha.iter().enumerate() {
                    let w = node.policy_prob * x * e[(o, s)];
                    if w == 0.0 {
                        continue;
                    }
                    for (a, &pa) in probs.iter().enumerate() {
                        out[(s, a)] += w * pa;
                    }
                }
            }
        });
    }
    Ok(out)
}

/// Action-marginalized occupancy `d^π_h(s)`.
pub fn state_marginal(model: &TabularPomdp, pi: &Policy, h: usize, cap: u64) -> Result<DVector<f64>> {
    let occ = latent_occupancy(model, pi, h, cap)?;
    Ok(DVector::from_iterator(occ.nrows(), occ.row_iter().map(|r| r.sum())))
}

/// `V^π_{S,h}(s)`: expected reward from step `h` on, given `s_h = s`, for a
/// memoryless policy.
pub fn latent_value(model: &TabularPomdp, pi: &Policy, h: usize) -> Result<DVector<f64>> {
    pi.require_memoryless("latent_value")?;
    pi.check_against(model)?;
    let last = model.horizon() - 1;
    if h > last {
        return Err(Error::Parameter(format!("step {h} >= horizon {}", model.horizon())));
    }
    let immediate = |k: usize| -> DVector<f64> {
        let r = DVector::from_column_slice(&model.rewards()[k]);
        model.emission(k).tr_mul(&r)
    };
    let mut v = immediate(last);
    for k in (h..last).rev() {
        let e = model.emission(k);
        let mut next = immediate(k);
        let continuation: Vec<DVector<f64>> =
            (0..model.action_count()).map(|a| model.transition(k, a).tr_mul(&v)).collect();
        for s in 0..model.state_count(k) {
            let mut acc = 0.0;
            for o in 0..model.obs_count(k) {
                let w = e[(o, s)];
                if w == 0.0 {
                    continue;
                }
                for (a, &pa) in pi.memoryless_probs(k, o).iter().enumerate() {
                    acc += w * pa * continuation[a][s];
                }
            }
            next[s] += acc;
        }
        v = next;
    }
    Ok(v)
}

/// Every complete trajectory in lexicographic order, zero-probability ones included.
pub fn enumerate_trajectories(model: &TabularPomdp, cap: u64) -> Result<Vec<Trajectory>> {
    check_cap(enumeration_size(model), cap)?;
    let mut out = Vec::new();
    walk_trajectories(model, None, false, &mut |steps, _, _| {
        let rewards = steps.iter().enumerate().map(|(k, x)| model.reward(k, x.obs)).collect();
        out.push(Trajectory { steps: steps.to_vec(), rewards });
    });
    Ok(out)
}

/// `P^π_M(τ)` for every complete trajectory, in the order of `enumerate_trajectories`.
pub fn full_trajectory_probs(model: &TabularPomdp, pi: &Policy, cap: u64) -> Result<Vec<f64>> {
    pi.check_against(model)?;
    check_cap(enumeration_size(model), cap)?;
    let mut out = Vec::new();
    walk_trajectories(model, Some(pi), false, &mut |_, env, pol| out.push(env * pol));
    Ok(out)
}

/// `P^π_M(τ_len, o_len)` for every history of `len` pairs and next observation,
/// in lexicographic order. `len < H`.
pub fn history_obs_probs(model: &TabularPomdp, pi: &Policy, len: usize, cap: u64) -> Result<Vec<f64>> {
    pi.check_against(model)?;
    if len >= model.horizon() {
        return Err(Error::Parameter(format!("len {len} >= horizon {}", model.horizon())));
    }
    check_cap(history_count(model, len) * model.obs_count(len) as f64, cap)?;
    let mut out = Vec::new();
    walk_histories(model, Some(pi), len, false, &mut |node| {
        if node.history.len() == len {
            for o in 0..model.obs_count(len) {
                out.push(node.policy_prob * obs_mass(model, len, o, node.alpha));
            }
        }
    });
    Ok(out)
}

/// `Σ_τ |P^π_{M1}(τ) − P^π_{M2}(τ)|` over complete trajectories.
pub fn trajectory_l1_distance(m1: &TabularPomdp, m2: &TabularPomdp, pi: &Policy, cap: u64) -> Result<f64> {
    if !m1.same_observables(m2) {
        return Err(Error::Structural("models differ in horizon, actions or observations".into()));
    }
    let p = full_trajectory_probs(m1, pi, cap)?;
    let q = full_trajectory_probs(m2, pi, cap)?;
    Ok(p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum())
}
