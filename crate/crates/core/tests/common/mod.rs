#![allow(dead_code)]

use pomdp_ope::constructions::{random_pomdp, RandomSpec, RevealingRequirement};
use nalgebra::DMatrix;
use pomdp_ope::{ObsAction, Policy, TabularPomdp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest step-0 future space allowed for the random revealing fixtures, so
/// that dense multi-step operators stay small.
pub const MAX_FUTURES: usize = 2000;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random single-step revealing model with at most 3 states, at most 4
/// observations, horizon at most 5 and two actions. State counts vary by step.
pub fn revealing_instance(seed: u64) -> TabularPomdp {
    let mut rng = rng(seed);
    loop {
        let obs = rng.random_range(2..=4usize);
        let horizon = rng.random_range(2..=5usize);
        let futures = (2 * obs).pow(horizon as u32 - 1) * obs;
        if futures > MAX_FUTURES {
            continue;
        }
        let max_states = obs.min(3);
        let states: Vec<usize> = (0..horizon).map(|_| rng.random_range(1..=max_states)).collect();
        let spec = RandomSpec {
            horizon,
            state_counts: states,
            action_count: 2,
            obs_counts: vec![obs; horizon],
            revealing: RevealingRequirement::Single,
            min_singular: 0.05,
        };
        return random_pomdp(&spec, &mut rng).expect("revealing instance");
    }
}

/// Every history of `0..H` pairs.
pub fn all_histories(model: &TabularPomdp) -> Vec<Vec<ObsAction>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for k in 0..model.horizon() - 1 {
        let mut next = Vec::new();
        for h in &frontier {
            for o in 0..model.obs_count(k) {
                for a in 0..model.action_count() {
                    let mut c: Vec<ObsAction> = h.clone();
                    c.push(ObsAction::new(o, a));
                    next.push(c);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Sums `d1(s_0) Π O(o_j|s_j) T(s_{j+1}|s_j,a_j)` over every latent path, with
/// the final observation included when `last_obs` is given. Returns the
/// unnormalized weight of each final latent state.
pub fn path_weights(model: &TabularPomdp, steps: &[ObsAction], last_obs: Option<usize>) -> Vec<f64> {
    fn go(
        model: &TabularPomdp,
        steps: &[ObsAction],
        last_obs: Option<usize>,
        k: usize,
        s: usize,
        w: f64,
        out: &mut [f64],
    ) {
        if w == 0.0 {
            return;
        }
        if k == steps.len() {
            let w = match last_obs {
                Some(o) => w * model.emission(k)[(o, s)],
                None => w,
            };
            out[s] += w;
            return;
        }
        let oa = steps[k];
        let w = w * model.emission(k)[(oa.obs, s)];
        for next in 0..model.state_count(k + 1) {
            go(model, steps, last_obs, k + 1, next, w * model.transition(k, oa.action)[(next, s)], out);
        }
    }
    let mut out = vec![0.0; model.state_count(steps.len())];
    for s in 0..model.state_count(0) {
        go(model, steps, last_obs, 0, s, model.initial_dist()[s], &mut out);
    }
    out
}

/// `P(f | s_h = s)` for every future in mixed-radix order, from an explicit
/// latent-path sum started at each state.
pub fn outcome_oracle(model: &TabularPomdp, pi_b: &Policy, h: usize) -> DMatrix<f64> {
    let last = model.horizon() - 1;
    let mut futures: Vec<(Vec<ObsAction>, usize)> = vec![(Vec::new(), 0)];
    for k in h..last {
        let mut next = Vec::new();
        for (pairs, _) in &futures {
            for o in 0..model.obs_count(k) {
                for a in 0..model.action_count() {
                    let mut p = pairs.clone();
                    p.push(ObsAction::new(o, a));
                    next.push((p, 0));
                }
            }
        }
        futures = next;
    }
    let futures: Vec<(Vec<ObsAction>, usize)> = futures
        .into_iter()
        .flat_map(|(p, _)| (0..model.obs_count(last)).map(move |o| (p.clone(), o)))
        .collect();
    let s_count = model.state_count(h);
    let mut u = DMatrix::zeros(futures.len(), s_count);
    for (row, (pairs, last_obs)) in futures.iter().enumerate() {
        let policy: f64 =
            pairs.iter().enumerate().map(|(j, x)| pi_b.memoryless_probs(h + j, x.obs)[x.action]).product();
        for s in 0..s_count {
            u[(row, s)] = policy * from_state(model, h, s, pairs, *last_obs);
        }
    }
    u
}

fn from_state(model: &TabularPomdp, k: usize, s: usize, pairs: &[ObsAction], last_obs: usize) -> f64 {
    match pairs.split_first() {
        None => model.emission(k)[(last_obs, s)],
        Some((x, rest)) => {
            let w = model.emission(k)[(x.obs, s)];
            if w == 0.0 {
                return 0.0;
            }
            (0..model.state_count(k + 1))
                .map(|n| w * model.transition(k, x.action)[(n, s)] * from_state(model, k + 1, n, rest, last_obs))
                .sum()
        }
    }
}

/// `Σ_f U(f,s) U(f,s') / Σ_t U(f,t)` over futures with positive mass.
pub fn gram_oracle(u: &DMatrix<f64>) -> DMatrix<f64> {
    let s = u.ncols();
    let mut out = DMatrix::zeros(s, s);
    for f in 0..u.nrows() {
        let z: f64 = u.row(f).sum();
        if z <= 0.0 {
            continue;
        }
        for i in 0..s {
            for j in 0..s {
                out[(i, j)] += u[(f, i)] * u[(f, j)] / z;
            }
        }
    }
    out
}

/// True when `m` is symmetric and its eigenvalues are at least `-tol`.
pub fn is_symmetric_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    if (m - m.transpose()).abs().max() > tol {
        return false;
    }
    nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.iter().all(|&x| x >= -tol)
}
