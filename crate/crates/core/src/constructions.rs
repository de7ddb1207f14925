//! Hardness instances, random fixtures and MDP embeddings.
//!
//! Action `0` is `L` and action `1` is `R` in the hardness instances.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::coverage::{
    compute_c_a, max_revealing_coefficient, sigma_future, sigma_history, sigma_obs, Coefficient,
    HistoryMode, RevealMode,
};
use crate::error::{Error, Result};
use crate::estimators::ModelClass;
use crate::linalg::singular_range;
use crate::pomdp::walk::check_cap;
use crate::pomdp::{default_cap, policy_value, ObsAction, Policy, TabularPomdp};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Tolerance for re-derived golden values.
pub const VALUE_TOL: f64 = 1e-12;
pub const COEFFICIENT_TOL: f64 = 1e-9;

/// A model class, policies and the golden values they must reproduce.
#[derive(Debug, Clone)]
pub struct HardnessBundle {
    pub name: String,
    pub true_model: TabularPomdp,
    pub model_class: ModelClass,
    pub behavior_policy: Policy,
    pub target_policies: Vec<(String, Policy)>,
    pub expected_values: BTreeMap<String, f64>,
    pub expected_coefficients: BTreeMap<String, Coefficient>,
}

impl HardnessBundle {
    pub fn target(&self, name: &str) -> Option<&Policy> {
        self.target_policies.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    /// Golden values as a JSON sidecar document.
    pub fn expected_json(&self) -> String {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            name: &'a str,
            expected_values: &'a BTreeMap<String, f64>,
            expected_coefficients: &'a BTreeMap<String, Coefficient>,
        }
        serde_json::to_string_pretty(&Sidecar {
            name: &self.name,
            expected_values: &self.expected_values,
            expected_coefficients: &self.expected_coefficients,
        })
        .expect("sidecar serializes")
    }
}

fn check_value(name: &str, expected: f64, computed: f64) -> Result<()> {
    if (expected - computed).abs() <= VALUE_TOL {
        Ok(())
    } else {
        Err(Error::GoldenMismatch { name: name.to_string(), expected, computed })
    }
}

fn check_coefficient(name: &str, expected: f64, computed: f64) -> Result<()> {
    let ok = if expected.is_infinite() {
        computed.is_infinite()
    } else {
        (expected - computed).abs() <= COEFFICIENT_TOL
    };
    if ok {
        Ok(())
    } else {
        Err(Error::GoldenMismatch { name: name.to_string(), expected, computed })
    }
}

fn column(n: usize, i: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, 1);
    m[(i, 0)] = 1.0;
    m
}

/// One state per step, two terminal states reached by the last decision, identity
/// emissions, and reward 1 on the `L` terminal state.
pub fn theorem3_model(horizon: usize) -> Result<TabularPomdp> {
    if horizon < 3 {
        return Err(Error::Parameter(format!("horizon must be at least 3, got {horizon}")));
    }
    let last = horizon - 1;
    let mut states = vec![1; horizon];
    states[last] = 2;
    let mut transitions = vec![vec![DMatrix::from_element(1, 1, 1.0); 2]; last - 1];
    transitions.push(vec![column(2, LEFT), column(2, RIGHT)]);
    let emissions = states.iter().map(|&s| DMatrix::identity(s, s)).collect();
    let mut rewards: Vec<Vec<f64>> = states.iter().map(|&s| vec![0.0; s]).collect();
    rewards[last][0] = 1.0;
    TabularPomdp::new(states.clone(), 2, states, vec![1.0], transitions, emissions, rewards)
}

/// Always `L`.
pub fn theorem3_pi1(horizon: usize) -> Policy {
    Policy::history_table(2, horizon, vec![1.0, 0.0]).expect("valid default")
}

/// `L` everywhere except `R` at the last decision after an all-`L` prefix.
pub fn theorem3_pi2(horizon: usize) -> Policy {
    let mut p = Policy::history_table(2, horizon, vec![1.0, 0.0]).expect("valid default");
    let prefix = vec![ObsAction::new(0, LEFT); horizon - 2];
    p.set_entry(&prefix, 0, vec![0.0, 1.0]).expect("valid entry");
    p
}

pub fn theorem3_instance(horizon: usize) -> Result<HardnessBundle> {
    theorem3_instance_with_cap(horizon, default_cap())
}

pub fn theorem3_instance_with_cap(horizon: usize, cap: u64) -> Result<HardnessBundle> {
    let model = theorem3_model(horizon)?;
    let pi_b = Policy::uniform(&model);
    let pi_1 = theorem3_pi1(horizon);
    let pi_2 = theorem3_pi2(horizon);

    let expected_values: BTreeMap<String, f64> =
        [("J(pi_1)", 1.0), ("J(pi_2)", 0.0), ("J(pi_b)", 0.5)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
    let expected_coefficients: BTreeMap<String, Coefficient> =
        [("C_A", 2.0), ("C_H", 1.0), ("C_O", 1.0), ("C_F", 1.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), Coefficient(v)))
            .collect();

    check_value("J(pi_1)", 1.0, policy_value(&model, &pi_1, cap)?)?;
    check_value("J(pi_2)", 0.0, policy_value(&model, &pi_2, cap)?)?;
    check_value("J(pi_b)", 0.5, policy_value(&model, &pi_b, cap)?)?;
    check_coefficient("C_A", 2.0, compute_c_a(&model, &pi_b, cap)?)?;
    check_coefficient("C_H", 1.0, max_c_h(&model, &pi_b, cap)?)?;
    check_coefficient("C_O", 1.0, max_revealing_coefficient(&model, &pi_b, RevealMode::Single, cap)?)?;
    check_coefficient("C_F", 1.0, max_revealing_coefficient(&model, &pi_b, RevealMode::Multi, cap)?)?;

    Ok(HardnessBundle {
        name: format!("theorem3-h{horizon}"),
        true_model: model.clone(),
        model_class: ModelClass::new(vec![model], Some(0))?,
        behavior_policy: pi_b,
        target_policies: vec![("pi_1".into(), pi_1), ("pi_2".into(), pi_2)],
        expected_values,
        expected_coefficients,
    })
}

/// Largest exact `c_h` over steps `0..H-1`.
pub fn max_c_h(model: &TabularPomdp, pi_b: &Policy, cap: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..model.horizon() - 1 {
        worst = worst.max(sigma_history(model, pi_b, k, HistoryMode::Exact { cap })?.c_h);
    }
    Ok(worst)
}

/// Observable process shared by the three models: a single observation before
/// the last step, then `good` (reward 1) or `bad` (reward 0).
fn theorem6_observables(horizon: usize) -> (Vec<usize>, Vec<Vec<f64>>) {
    let last = horizon - 1;
    let mut obs = vec![1; horizon];
    obs[last] = 2;
    let mut rewards: Vec<Vec<f64>> = obs.iter().map(|&o| vec![0.0; o]).collect();
    rewards[last][0] = 1.0;
    (obs, rewards)
}

/// The true model: one state before the last step, `good` iff the last decision is `L`.
pub fn theorem6_true_model(horizon: usize) -> Result<TabularPomdp> {
    if horizon < 3 {
        return Err(Error::Parameter(format!("horizon must be at least 3, got {horizon}")));
    }
    let last = horizon - 1;
    let (obs, rewards) = theorem6_observables(horizon);
    let mut states = vec![1; horizon];
    states[last] = 2;
    let mut transitions = vec![vec![DMatrix::from_element(1, 1, 1.0); 2]; last - 1];
    transitions.push(vec![column(2, 0), column(2, 1)]);
    let emissions = states.iter().map(|&s| DMatrix::identity(s, s)).collect();
    TabularPomdp::new(states, 2, obs, vec![1.0], transitions, emissions, rewards)
}

/// History-recording model: state at step `k` is the binary record of the
/// first `k` actions. `all_right_good` makes the all-`R` record reach `good`
/// under a final `R`.
fn theorem6_recording_model(horizon: usize, all_right_good: bool, cap: u64) -> Result<TabularPomdp> {
    if horizon < 3 {
        return Err(Error::Parameter(format!("horizon must be at least 3, got {horizon}")));
    }
    let last = horizon - 1;
    let widest = 1u64.checked_shl((2 * (horizon - 2)) as u32).unwrap_or(u64::MAX);
    check_cap(widest as f64, cap)?;
    let (obs, rewards) = theorem6_observables(horizon);
    let mut states: Vec<usize> = (0..last).map(|k| 1usize << k).collect();
    states.push(2);
    let mut transitions = Vec::with_capacity(last);
    for k in 0..last - 1 {
        let (rows, cols) = (states[k + 1], states[k]);
        let per_action = (0..2)
            .map(|a| {
                let mut t = DMatrix::zeros(rows, cols);
                for s in 0..cols {
                    t[(2 * s + a, s)] = 1.0;
                }
                t
            })
            .collect();
        transitions.push(per_action);
    }
    let cols = states[last - 1];
    let mut left = DMatrix::zeros(2, cols);
    let mut right = DMatrix::zeros(2, cols);
    for s in 0..cols {
        left[(0, s)] = 1.0;
        right[(1, s)] = 1.0;
    }
    if all_right_good {
        right[(1, cols - 1)] = 0.0;
        right[(0, cols - 1)] = 1.0;
    }
    transitions.push(vec![left, right]);
    let mut emissions: Vec<DMatrix<f64>> = (0..last).map(|k| DMatrix::from_element(1, states[k], 1.0)).collect();
    emissions.push(DMatrix::identity(2, 2));
    TabularPomdp::new(states, 2, obs, vec![1.0], transitions, emissions, rewards)
}

pub fn theorem6_instance(horizon: usize) -> Result<HardnessBundle> {
    theorem6_instance_with_cap(horizon, default_cap())
}

pub fn theorem6_instance_with_cap(horizon: usize, cap: u64) -> Result<HardnessBundle> {
    let m_star = theorem6_true_model(horizon)?;
    let m1 = theorem6_recording_model(horizon, false, cap)?;
    let m2 = theorem6_recording_model(horizon, true, cap)?;
    let pi_b = Policy::uniform(&m_star);
    let pi_e = Policy::open_loop(2, vec![RIGHT; horizon])?;

    let expected_values: BTreeMap<String, f64> = [
        ("J_Mstar(pi_e)", 0.0),
        ("J_M1(pi_e)", 0.0),
        ("J_M2(pi_e)", 1.0),
        ("J_Mstar(pi_b)", 0.5),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let inf = f64::INFINITY;
    let expected_coefficients: BTreeMap<String, Coefficient> = [
        ("C_A", 2.0),
        ("C_O(Mstar)", 1.0),
        ("C_H(Mstar)", 1.0),
        ("C_O(M1)", inf),
        ("C_O(M2)", inf),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), Coefficient(v)))
    .collect();

    check_value("J_Mstar(pi_e)", 0.0, policy_value(&m_star, &pi_e, cap)?)?;
    check_value("J_M1(pi_e)", 0.0, policy_value(&m1, &pi_e, cap)?)?;
    check_value("J_M2(pi_e)", 1.0, policy_value(&m2, &pi_e, cap)?)?;
    check_value("J_Mstar(pi_b)", 0.5, policy_value(&m_star, &pi_b, cap)?)?;
    check_coefficient("C_A", 2.0, compute_c_a(&m_star, &pi_b, cap)?)?;
    check_coefficient("C_O(Mstar)", 1.0, max_revealing_coefficient(&m_star, &pi_b, RevealMode::Single, cap)?)?;
    check_coefficient("C_H(Mstar)", 1.0, max_c_h(&m_star, &pi_b, cap)?)?;
    check_coefficient("C_O(M1)", inf, max_revealing_coefficient(&m1, &pi_b, RevealMode::Single, cap)?)?;
    check_coefficient("C_O(M2)", inf, max_revealing_coefficient(&m2, &pi_b, RevealMode::Single, cap)?)?;

    Ok(HardnessBundle {
        name: format!("theorem6-h{horizon}"),
        true_model: m_star,
        model_class: ModelClass::new(vec![m1, m2], None)?,
        behavior_policy: pi_b,
        target_policies: vec![("pi_e".into(), pi_e)],
        expected_values,
        expected_coefficients,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevealingRequirement {
    None,
    Single,
    Multi,
}

/// Parameters for [`random_pomdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomSpec {
    pub horizon: usize,
    pub state_counts: Vec<usize>,
    pub action_count: usize,
    pub obs_counts: Vec<usize>,
    pub revealing: RevealingRequirement,
    pub min_singular: f64,
}

impl RandomSpec {
    /// Same state and observation count at every step.
    pub fn uniform(horizon: usize, states: usize, actions: usize, obs: usize) -> Self {
        Self {
            horizon,
            state_counts: vec![states; horizon],
            action_count: actions,
            obs_counts: vec![obs; horizon],
            revealing: RevealingRequirement::None,
            min_singular: 0.0,
        }
    }

    pub fn revealing(mut self, requirement: RevealingRequirement, min_singular: f64) -> Self {
        self.revealing = requirement;
        self.min_singular = min_singular;
        self
    }
}

pub const MAX_GENERATION_ATTEMPTS: usize = 1000;

/// Point drawn uniformly from the probability simplex.
pub fn dirichlet_ones<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

fn random_stochastic<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for (i, p) in dirichlet_ones(rows, rng).into_iter().enumerate() {
            m[(i, j)] = p;
        }
    }
    m
}

/// Random model with Dirichlet(1) columns and uniform rewards. With a revealing
/// requirement, each step's emission is redrawn, last step first, until that
/// step's revealing matrix has smallest singular value at least `min_singular`.
/// The multi-step check covers steps `0..H-1`, using the uniform behavior
/// policy and the emissions already fixed for later steps.
pub fn random_pomdp<R: Rng>(spec: &RandomSpec, rng: &mut R) -> Result<TabularPomdp> {
    let h = spec.horizon;
    if h == 0 || spec.state_counts.len() != h || spec.obs_counts.len() != h || spec.action_count == 0 {
        return Err(Error::Parameter("random spec has inconsistent lengths".into()));
    }
    if spec.revealing == RevealingRequirement::Single
        && spec.obs_counts.iter().zip(&spec.state_counts).any(|(o, s)| o < s)
    {
        return Err(Error::Parameter(
            "single-step revealing needs at least as many observations as states".into(),
        ));
    }
    let s = &spec.state_counts;
    let initial = dirichlet_ones(s[0], rng);
    let transitions: Vec<Vec<DMatrix<f64>>> = (0..h - 1)
        .map(|k| (0..spec.action_count).map(|_| random_stochastic(s[k + 1], s[k], rng)).collect())
        .collect();
    let rewards: Vec<Vec<f64>> =
        spec.obs_counts.iter().map(|&o| (0..o).map(|_| rng.random::<f64>()).collect()).collect();
    let mut emissions: Vec<DMatrix<f64>> = (0..h).map(|k| random_stochastic(spec.obs_counts[k], s[k], rng)).collect();
    let build = |emissions: &[DMatrix<f64>]| {
        TabularPomdp::new(
            s.clone(),
            spec.action_count,
            spec.obs_counts.clone(),
            initial.clone(),
            transitions.clone(),
            emissions.to_vec(),
            rewards.clone(),
        )
    };
    if spec.revealing == RevealingRequirement::None {
        return build(&emissions);
    }
    // multi-step revealing is required below the last step only
    let checked = if spec.revealing == RevealingRequirement::Multi { h - 1 } else { h };
    for k in (0..checked).rev() {
        let mut attempts = 0;
        while !step_meets_requirement(&build(&emissions)?, k, spec)? {
            attempts += 1;
            if attempts == MAX_GENERATION_ATTEMPTS {
                return Err(Error::GenerationFailure { attempts });
            }
            emissions[k] = random_stochastic(spec.obs_counts[k], s[k], rng);
        }
    }
    build(&emissions)
}

fn step_meets_requirement(model: &TabularPomdp, k: usize, spec: &RandomSpec) -> Result<bool> {
    let sigma = match spec.revealing {
        RevealingRequirement::None => return Ok(true),
        RevealingRequirement::Single => sigma_obs(model, k).matrix,
        RevealingRequirement::Multi => sigma_future(model, &Policy::uniform(model), k, default_cap())?.matrix,
    };
    Ok(singular_range(&sigma).0 >= spec.min_singular)
}

/// POMDP with identity emissions: observations are states.
/// `transitions[h][a]` is `|S_{h+1}| x |S_h|`; `state_rewards[h][s]` in `[0, 1]`.
pub fn mdp_embed(
    transitions: Vec<Vec<DMatrix<f64>>>,
    state_rewards: Vec<Vec<f64>>,
    initial_dist: Vec<f64>,
) -> Result<TabularPomdp> {
    let horizon = state_rewards.len();
    let action_count = transitions.first().map_or(1, |t| t.len());
    let states: Vec<usize> = state_rewards.iter().map(|r| r.len()).collect();
    let emissions = states.iter().map(|&s| DMatrix::identity(s, s)).collect();
    if transitions.len() + 1 != horizon {
        return Err(Error::Structural(format!(
            "{} transition steps for {horizon} reward steps",
            transitions.len()
        )));
    }
    TabularPomdp::new(states.clone(), action_count, states, initial_dist, transitions, emissions, state_rewards)
}

/// Random tabular MDP embedded as a POMDP.
pub fn random_mdp<R: Rng>(horizon: usize, states: usize, actions: usize, rng: &mut R) -> Result<TabularPomdp> {
    let transitions = (0..horizon.saturating_sub(1))
        .map(|_| (0..actions).map(|_| random_stochastic(states, states, rng)).collect())
        .collect();
    let rewards = (0..horizon).map(|_| (0..states).map(|_| rng.random::<f64>()).collect()).collect();
    mdp_embed(transitions, rewards, dirichlet_ones(states, rng))
}

/// Memoryless policy with Dirichlet(1) rows mixed with uniform so that every
/// action has probability at least `floor`.
pub fn random_memoryless_policy<R: Rng>(model: &TabularPomdp, floor: f64, rng: &mut R) -> Policy {
    let a = model.action_count();
    let mix = (floor * a as f64).clamp(0.0, 1.0);
    let tables = model
        .obs_counts()
        .iter()
        .map(|&o| {
            (0..o)
                .map(|_| dirichlet_ones(a, rng).into_iter().map(|p| (1.0 - mix) * p + mix / a as f64).collect())
                .collect()
        })
        .collect();
    Policy::memoryless(a, tables).expect("mixed rows are distributions")
}

/// History-table policy with an independent random distribution for every
/// history and observation.
pub fn random_history_policy<R: Rng>(model: &TabularPomdp, rng: &mut R) -> Result<Policy> {
    let a = model.action_count();
    let h = model.horizon();
    check_cap(crate::pomdp::enumeration_size(model), default_cap())?;
    let mut policy = Policy::history_table(a, h, vec![1.0 / a as f64; a])?;
    let mut history = Vec::with_capacity(h);
    fill_history_policy(model, &mut policy, &mut history, rng)?;
    Ok(policy)
}

fn fill_history_policy<R: Rng>(
    model: &TabularPomdp,
    policy: &mut Policy,
    history: &mut Vec<ObsAction>,
    rng: &mut R,
) -> Result<()> {
    let k = history.len();
    if k == model.horizon() {
        return Ok(());
    }
    for o in 0..model.obs_count(k) {
        policy.set_entry(history, o, dirichlet_ones(model.action_count(), rng))?;
    }
    for o in 0..model.obs_count(k) {
        for a in 0..model.action_count() {
            history.push(ObsAction::new(o, a));
            fill_history_policy(model, policy, history, rng)?;
            history.pop();
        }
    }
    Ok(())
}

/// Copy of `model` with `delta` probability moved from the most likely to the
/// least likely successor in one transition column.
pub fn perturb_transition(model: &TabularPomdp, step: usize, action: usize, state: usize, delta: f64) -> Result<TabularPomdp> {
    let mut file = model.to_file();
    let t = model.transition(step, action);
    let col: Vec<f64> = t.column(state).iter().copied().collect();
    let (hi, _) = col.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let (lo, _) = col.iter().enumerate().fold((0, f64::MAX), |b, (i, &v)| if v < b.1 { (i, v) } else { b });
    if hi == lo {
        return Err(Error::Parameter("column has a single successor".into()));
    }
    let moved = delta.min(col[hi]);
    file.transitions[step][action][hi][state] -= moved;
    file.transitions[step][action][lo][state] += moved;
    file.into_model()
}

/// Seed of the fixed instance used for the sample-size experiments.
pub const RATE_INSTANCE_SEED: u64 = 20_240_517;

/// Fixed two-state, three-observation single-step-revealing model with
/// horizon 5, four perturbed copies, the uniform behavior policy and a random
/// history-dependent target policy. The true model is index 0.
pub fn mle_rate_instance() -> Result<(ModelClass, Policy, Policy)> {
    mle_rate_instance_with_horizon(5)
}

/// [`mle_rate_instance`] at another horizon (at least 2).
pub fn mle_rate_instance_with_horizon(horizon: usize) -> Result<(ModelClass, Policy, Policy)> {
    use rand::SeedableRng;
    if horizon < 2 {
        return Err(Error::Parameter(format!("horizon must be at least 2, got {horizon}")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(RATE_INSTANCE_SEED);
    let spec = RandomSpec::uniform(horizon, 2, 2, 3).revealing(RevealingRequirement::Single, 0.2);
    let m_star = random_pomdp(&spec, &mut rng)?;
    let mut models = vec![m_star.clone()];
    for (i, delta) in [0.3, 0.2, 0.1, 0.05].into_iter().enumerate() {
        models.push(perturb_transition(&m_star, i % (horizon - 1), i % 2, (i / 2) % 2, delta)?);
    }
    let pi_b = Policy::uniform(&m_star);
    let pi_e = random_history_policy(&m_star, &mut rng)?;
    Ok((ModelClass::new(models, Some(0))?, pi_b, pi_e))
}
