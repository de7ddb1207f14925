//! Observable-operator parameterizations.
//!
//! In single mode the observable space at step `h` is `O_h`; in multi mode it
//! is the future space `F_h` with outcome matrix `U_{F,h}` under a memoryless
//! behavior policy. Either way, with `K_h` the step-`h` outcome matrix,
//!
//! ```text
//! b0       = K_0 d1
//! B_h(o,a) = K_{h+1} T_{h,a} diag(O_h(o|·)) K_h^{†,w}
//! K^{†,w}  = (Kᵀ W⁻¹ K)⁻¹ Kᵀ W⁻¹,   W = diag(K 1)
//! ```
//!
//! and `K_{H-1} = O_{H-1}` in both modes.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use serde::Serialize;
use rand_chacha::ChaCha8Rng;

use crate::coverage::{outcome_matrix, RevealMode};
use crate::error::{Error, Result};
use crate::linalg::{l1_norm, nonzero_rows, solve, vec_l1, weighted_gram};
use crate::pomdp::walk::{check_cap, env_prob_of, walk_histories};
use crate::pomdp::{
    belief_state, enumerate_trajectories, sample_trajectory, trajectory_prob, ObsAction, Policy, TabularPomdp,
    Trajectory,
};

/// Residual allowed by the construction-time spot check.
pub const SPOT_CHECK_TOL: f64 = 1e-6;
const SPOT_CHECK_SAMPLES: usize = 100;
const SPOT_CHECK_SEED: u64 = 0x5eed_00f0;

#[derive(Debug, Clone)]
pub struct OomModel {
    mode: RevealMode,
    horizon: usize,
    action_count: usize,
    b0: DVector<f64>,
    /// `operators[h][o][a]` for `h in 0..H-1`.
    operators: Vec<Vec<Vec<DMatrix<f64>>>>,
    pseudo_inverses: Vec<DMatrix<f64>>,
    /// `K_h` for every step.
    outcomes: Vec<DMatrix<f64>>,
    coefficients: Vec<f64>,
}

/// Weighted pseudo-inverse `(Kᵀ W⁻¹ K)⁻¹ Kᵀ W⁻¹` and `‖(Kᵀ W⁻¹ K)⁻¹‖₁`, or
/// `None` when the Gram matrix is singular.
pub fn weighted_pseudo_inverse(k: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    if nonzero_rows(k) < k.ncols() {
        return None;
    }
    let sigma = weighted_gram(k, &DVector::from_element(k.ncols(), 1.0));
    let mut scaled = k.transpose();
    for (f, mut col) in scaled.column_iter_mut().enumerate() {
        let w: f64 = k.row(f).sum();
        if w > 0.0 {
            col /= w;
        } else {
            col.fill(0.0);
        }
    }
    let inv = solve(&sigma, &DMatrix::identity(sigma.nrows(), sigma.ncols()))?;
    let coefficient = l1_norm(&inv);
    Some((solve(&sigma, &scaled)?, coefficient))
}

/// Builds the operator model. `pi_b` is required (and must be memoryless) in
/// multi mode and ignored in single mode.
pub fn build_oom(model: &TabularPomdp, mode: RevealMode, pi_b: Option<&Policy>, cap: u64) -> Result<OomModel> {
    let h_count = model.horizon();
    let outcomes: Vec<DMatrix<f64>> = match mode {
        RevealMode::Single => (0..h_count).map(|h| model.emission(h).clone()).collect(),
        RevealMode::Multi => {
            let pi_b = pi_b.ok_or_else(|| {
                Error::Parameter("multi-step operators need a behavior policy".into())
            })?;
            pi_b.require_memoryless("multi-step operators")?;
            let mut out = Vec::with_capacity(h_count);
            for h in 0..h_count {
                out.push(outcome_matrix(model, pi_b, h, cap)?);
            }
            for h in 0..h_count.saturating_sub(1) {
                check_cap((out[h].nrows() * out[h + 1].nrows()) as f64, cap)?;
            }
            out
        }
    };

    let mut pseudo_inverses = Vec::with_capacity(h_count.saturating_sub(1));
    let mut coefficients = Vec::with_capacity(h_count.saturating_sub(1));
    let mut operators = Vec::with_capacity(h_count.saturating_sub(1));
    for h in 0..h_count - 1 {
        let (pinv, c) =
            weighted_pseudo_inverse(&outcomes[h]).ok_or(Error::RevealingViolation { step: h })?;
        let e = model.emission(h);
        let mut per_obs = Vec::with_capacity(model.obs_count(h));
        for o in 0..model.obs_count(h) {
            // diag(O_h(o|·)) K^† scales the rows of K^†
            let mut masked = pinv.clone();
            for (s, mut row) in masked.row_iter_mut().enumerate() {
                row *= e[(o, s)];
            }
            let per_action = (0..model.action_count())
                .map(|a| &outcomes[h + 1] * (model.transition(h, a) * &masked))
                .collect();
            per_obs.push(per_action);
        }
        operators.push(per_obs);
        pseudo_inverses.push(pinv);
        coefficients.push(c);
    }

    let oom = OomModel {
        mode,
        horizon: h_count,
        action_count: model.action_count(),
        b0: &outcomes[0] * model.initial_dist(),
        operators,
        pseudo_inverses,
        outcomes,
        coefficients,
    };

    let uniform = Policy::uniform(model);
    let mut rng = ChaCha8Rng::seed_from_u64(SPOT_CHECK_SEED);
    let mut residual: f64 = 0.0;
    for _ in 0..SPOT_CHECK_SAMPLES {
        let tau = sample_trajectory(model, &uniform, &mut rng);
        residual = residual.max((oom.env_prob(&tau.steps) - env_prob_of(model, &tau.steps)).abs());
    }
    if !(residual <= SPOT_CHECK_TOL) {
        return Err(Error::Reconstruction { residual });
    }
    Ok(oom)
}

impl OomModel {
    pub fn mode(&self) -> RevealMode {
        self.mode
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn b0(&self) -> &DVector<f64> {
        &self.b0
    }

    pub fn operator(&self, h: usize, obs: usize, action: usize) -> &DMatrix<f64> {
        &self.operators[h][obs][action]
    }

    pub fn pseudo_inverse(&self, h: usize) -> &DMatrix<f64> {
        &self.pseudo_inverses[h]
    }

    /// `O_h` (single mode) or `U_{F,h}` (multi mode).
    pub fn outcome(&self, h: usize) -> &DMatrix<f64> {
        &self.outcomes[h]
    }

    /// `‖Σ_h⁻¹‖₁` for the step-`h` revealing matrix, `h < H-1`.
    pub fn coefficient(&self, h: usize) -> f64 {
        self.coefficients[h]
    }

    /// `b(τ) = B_{k-1} ⋯ B_0 b0` for a history of `k < H` pairs.
    pub fn state_vector(&self, history: &[ObsAction]) -> DVector<f64> {
        let mut b = self.b0.clone();
        for (k, x) in history.iter().enumerate() {
            b = &self.operators[k][x.obs][x.action] * b;
        }
        b
    }

    /// Environment factor of a complete trajectory, `[B_{H-2} ⋯ B_0 b0]_{o_{H-1}}`.
    pub fn env_prob(&self, steps: &[ObsAction]) -> f64 {
        let last = self.horizon - 1;
        self.state_vector(&steps[..last])[steps[last].obs]
    }
}

/// `P^π(τ) = π(τ) · [B_{H-2} ⋯ B_0 b0]_{o_{H-1}}`.
pub fn oom_trajectory_prob(oom: &OomModel, pi: &Policy, tau: &Trajectory) -> Result<f64> {
    if tau.len() != oom.horizon || pi.action_count() != oom.action_count {
        return Err(Error::Structural("trajectory or policy does not match the operator model".into()));
    }
    for (k, x) in tau.steps.iter().enumerate() {
        let obs_dim = if k + 1 < oom.horizon {
            oom.operators[k].len()
        } else {
            oom.outcomes[k].nrows()
        };
        if x.obs >= obs_dim || x.action >= oom.action_count {
            return Err(Error::Structural(format!("step {k} out of range")));
        }
    }
    let policy = pi.sequence_prob(&tau.steps);
    if policy == 0.0 {
        return Ok(0.0);
    }
    Ok(policy * oom.env_prob(&tau.steps))
}

/// `‖b(τ) − P(τ) K_k b_S(τ)‖₁` for a history of `k < H` pairs.
pub fn belief_relation_residual(model: &TabularPomdp, oom: &OomModel, history: &[ObsAction]) -> Result<f64> {
    let belief = belief_state(model, history)?;
    let p = env_prob_of(model, history);
    let rhs = &oom.outcomes[history.len()] * belief.values * p;
    Ok(vec_l1((oom.state_vector(history) - rhs).as_slice()))
}

/// `Σ_{τ_{j..=h}} ‖B_h ⋯ B_j x‖₁ · π(τ_{j..=h} | prefix)` for `x` in the step-`j`
/// observable space. `prefix` is the history before step `j`.
pub fn operator_contraction_check(
    oom: &OomModel,
    x: &DVector<f64>,
    j: usize,
    h: usize,
    pi: &Policy,
    prefix: &[ObsAction],
    cap: u64,
) -> Result<f64> {
    if j > h || h + 1 >= oom.horizon {
        return Err(Error::Parameter(format!(
            "need j <= h < {} (got j={j}, h={h})",
            oom.horizon - 1
        )));
    }
    if prefix.len() != j {
        return Err(Error::Parameter(format!("prefix has length {}, expected {j}", prefix.len())));
    }
    if x.len() != oom.outcomes[j].nrows() {
        return Err(Error::Structural(format!(
            "vector has length {}, step-{j} space has dimension {}",
            x.len(),
            oom.outcomes[j].nrows()
        )));
    }
    let size: f64 = (j..=h)
        .map(|k| (oom.operators[k].len() * oom.action_count) as f64)
        .product();
    check_cap(size, cap)?;
    let mut history = prefix.to_vec();
    Ok(contraction_sum(oom, x, h, pi, &mut history, 1.0))
}

fn contraction_sum(
    oom: &OomModel,
    v: &DVector<f64>,
    h: usize,
    pi: &Policy,
    history: &mut Vec<ObsAction>,
    weight: f64,
) -> f64 {
    let k = history.len();
    let mut total = 0.0;
    for o in 0..oom.operators[k].len() {
        let probs = pi.action_probs(history, o).to_vec();
        for (a, &pa) in probs.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            let next = &oom.operators[k][o][a] * v;
            history.push(ObsAction::new(o, a));
            total += if k == h {
                weight * pa * vec_l1(next.as_slice())
            } else {
                contraction_sum(oom, &next, h, pi, history, weight * pa)
            };
            history.pop();
        }
    }
    total
}

/// Outcome of [`oom_check_suite`].
#[derive(Debug, Clone, Serialize)]
pub struct OomCheckReport {
    pub mode: RevealMode,
    pub trajectories: usize,
    /// Largest `|P_oom(τ) − P(τ)|` over all complete trajectories.
    pub max_prob_error: f64,
    pub histories: usize,
    pub max_belief_residual: f64,
    pub contraction_checks: usize,
    /// Largest `lhs − c_j ‖x‖₁` over the contraction checks.
    pub max_contraction_excess: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl OomCheckReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Reconstruction on every trajectory, the belief relation on every
/// positive-probability history, and `vectors` random contraction checks with
/// uniform `[-1, 1]` entries and prefixes sampled under `pi`.
pub fn oom_check_suite(
    model: &TabularPomdp,
    oom: &OomModel,
    pi: &Policy,
    vectors: usize,
    seed: u64,
    tolerance: f64,
    cap: u64,
) -> Result<OomCheckReport> {
    pi.check_against(model)?;
    let trajectories = enumerate_trajectories(model, cap)?;
    let mut max_prob_error: f64 = 0.0;
    for tau in &trajectories {
        let exact = trajectory_prob(model, pi, tau, tau.len())?.joint;
        max_prob_error = max_prob_error.max((oom_trajectory_prob(oom, pi, tau)? - exact).abs());
    }

    let mut histories = 0;
    let mut max_belief_residual: f64 = 0.0;
    let mut failure = None;
    walk_histories(model, None, model.horizon() - 1, true, &mut |node| {
        if failure.is_some() {
            return;
        }
        histories += 1;
        match belief_relation_residual(model, oom, node.history) {
            Ok(r) => max_belief_residual = max_belief_residual.max(r),
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_contraction_excess = f64::NEG_INFINITY;
    let mut contraction_checks = 0;
    let inner = model.horizon() - 1;
    if inner > 0 {
        for _ in 0..vectors {
            let j = rng.random_range(0..inner);
            let h = rng.random_range(j..inner);
            let dim = oom.outcome(j).nrows();
            let x = DVector::from_iterator(dim, (0..dim).map(|_| rng.random_range(-1.0..=1.0)));
            let prefix = sample_trajectory(model, pi, &mut rng).steps[..j].to_vec();
            let lhs = operator_contraction_check(oom, &x, j, h, pi, &prefix, cap)?;
            max_contraction_excess = max_contraction_excess.max(lhs - oom.coefficient(j) * vec_l1(x.as_slice()));
            contraction_checks += 1;
        }
    }

    let passed = max_prob_error <= tolerance
        && max_belief_residual <= tolerance
        && (contraction_checks == 0 || max_contraction_excess <= tolerance);
    Ok(OomCheckReport {
        mode: oom.mode,
        trajectories: trajectories.len(),
        max_prob_error,
        histories,
        max_belief_residual,
        contraction_checks,
        max_contraction_excess: if contraction_checks == 0 { 0.0 } else { max_contraction_excess },
        tolerance,
        passed,
    })
}
