//! Depth-first history enumeration with a forward-filter state carried along.

use super::{ObsAction, Policy, TabularPomdp};
use crate::error::{Error, Result};

pub const DEFAULT_CAP: u64 = 10_000_000;

/// Environment variable consulted for the default enumeration cap.
pub const CAP_ENV: &str = "POMDP_OPE_CAP";

pub fn default_cap() -> u64 {
    std::env::var(CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_CAP)
}

/// `Π_{k < len} |O_k|·A`: the number of histories with `len` pairs.
pub fn history_count(model: &TabularPomdp, len: usize) -> f64 {
    (0..len)
        .map(|k| (model.obs_count(k) * model.action_count()) as f64)
        .product()
}

/// Number of complete trajectories, `Π_h |O_h|·A`.
pub fn enumeration_size(model: &TabularPomdp) -> f64 {
    history_count(model, model.horizon())
}

pub(crate) fn check_cap(required: f64, cap: u64) -> Result<()> {
    if required > cap as f64 {
        Err(Error::Capacity { required, cap })
    } else {
        Ok(())
    }
}

/// `Σ_s O_k(o|s) α[s]`.
pub(crate) fn obs_mass(model: &TabularPomdp, step: usize, obs: usize, alpha: &[f64]) -> f64 {
    let e = model.emission(step);
    alpha
        .iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(s, &x)| e[(obs, s)] * x)
        .sum()
}

/// `out = T_{k,a} diag(O_k(o|·)) α`, skipping zero entries of `α`.
pub(crate) fn propagate(
    model: &TabularPomdp,
    step: usize,
    obs: usize,
    action: usize,
    alpha: &[f64],
    out: &mut Vec<f64>,
) {
    let t = model.transition(step, action);
    let e = model.emission(step);
    out.clear();
    out.resize(t.nrows(), 0.0);
    for (s, &x) in alpha.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let w = x * e[(obs, s)];
        if w == 0.0 {
            continue;
        }
        for (dst, &p) in out.iter_mut().zip(t.column(s).iter()) {
            *dst += w * p;
        }
    }
}

/// Forward vector after a full history prefix (no policy factor).
pub(crate) fn forward(model: &TabularPomdp, history: &[ObsAction]) -> Vec<f64> {
    let mut alpha: Vec<f64> = model.initial_dist().iter().copied().collect();
    let mut next = Vec::new();
    for (k, x) in history.iter().enumerate() {
        propagate(model, k, x.obs, x.action, &alpha, &mut next);
        std::mem::swap(&mut alpha, &mut next);
    }
    alpha
}

/// `P_M(τ)` by forward recursion; a history of length `H` includes `o_{H-1}`.
pub(crate) fn env_prob_of(model: &TabularPomdp, steps: &[ObsAction]) -> f64 {
    let last = model.horizon() - 1;
    if steps.len() == model.horizon() {
        let alpha = forward(model, &steps[..last]);
        obs_mass(model, last, steps[last].obs, &alpha)
    } else {
        forward(model, steps).iter().sum()
    }
}

pub(crate) struct HistoryNode<'a> {
    pub history: &'a [ObsAction],
    /// `α[s] = P_M(τ, s_k = s)` for the history `τ` of length `k`.
    pub alpha: &'a [f64],
    /// `π(τ)` (1 when no policy is supplied).
    pub policy_prob: f64,
}

/// Visits every history of length `0..=max_len` in lexicographic pre-order.
/// With `prune`, branches of zero environment or policy probability are skipped.
pub(crate) fn walk_histories(
    model: &TabularPomdp,
    policy: Option<&Policy>,
    max_len: usize,
    prune: bool,
    visit: &mut dyn FnMut(&HistoryNode<'_>),
) {
    debug_assert!(max_len < model.horizon());
    let alpha: Vec<f64> = model.initial_dist().iter().copied().collect();
    let mut history = Vec::with_capacity(max_len);
    recurse(model, policy, max_len, prune, &mut history, &alpha, 1.0, visit);
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    model: &TabularPomdp,
    policy: Option<&Policy>,
    max_len: usize,
    prune: bool,
    history: &mut Vec<ObsAction>,
    alpha: &[f64],
    policy_prob: f64,
    visit: &mut dyn FnMut(&HistoryNode<'_>),
) {
    visit(&HistoryNode { history, alpha, policy_prob });
    let k = history.len();
    if k == max_len {
        return;
    }
    let mut next = Vec::new();
    for o in 0..model.obs_count(k) {
        if prune && obs_mass(model, k, o, alpha) == 0.0 {
            continue;
        }
        for a in 0..model.action_count() {
            let pa = policy.map_or(1.0, |p| p.action_probs(history, o)[a]);
            if prune && pa == 0.0 {
                continue;
            }
            propagate(model, k, o, a, alpha, &mut next);
            let child = std::mem::take(&mut next);
            history.push(ObsAction::new(o, a));
            recurse(model, policy, max_len, prune, history, &child, policy_prob * pa, visit);
            history.pop();
            next = child;
        }
    }
}

/// Visits every complete trajectory `(o_0, a_0, …, o_{H-1}, a_{H-1})` with its
/// environment and policy factors.
pub(crate) fn walk_trajectories(
    model: &TabularPomdp,
    policy: Option<&Policy>,
    prune: bool,
    visit: &mut dyn FnMut(&[ObsAction], f64, f64),
) {
    let last = model.horizon() - 1;
    let mut full = Vec::with_capacity(model.horizon());
    walk_histories(model, policy, last, prune, &mut |node| {
        if node.history.len() != last {
            return;
        }
        full.clear();
        full.extend_from_slice(node.history);
        for o in 0..model.obs_count(last) {
            let env = obs_mass(model, last, o, node.alpha);
            if prune && env == 0.0 {
                continue;
            }
            for a in 0..model.action_count() {
                let pa = policy.map_or(1.0, |p| p.action_probs(node.history, o)[a]);
                if prune && pa == 0.0 {
                    continue;
                }
                full.push(ObsAction::new(o, a));
                visit(&full, env, node.policy_prob * pa);
                full.pop();
            }
        }
    });
}
