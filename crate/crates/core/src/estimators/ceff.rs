use nalgebra::{DMatrix, DVector};

use crate::coverage::RevealMode;
use crate::error::{Error, Result};
use crate::linalg::vec_l1;
use crate::oom::{build_oom, OomModel};
use crate::pomdp::walk::{check_cap, walk_histories};
use crate::pomdp::{history_count, latent_occupancy, state_marginal, Policy, TabularPomdp};

/// Operator differences at or below this size count as identical.
const SAME_OPERATOR_TOL: f64 = 1e-12;

/// Effective coverage coefficient with its per-step parts.
#[derive(Debug, Clone, PartialEq)]
pub struct CeffReport {
    pub value: f64,
    /// Per-step `E_{π_e}` sums (numerators), steps `0..H-1`.
    pub numerators: Vec<f64>,
    /// Per-step `E_{π_b}` sums (denominators).
    pub denominators: Vec<f64>,
    /// Per-step ratio, `None` where the step is skipped as 0/0.
    pub ratios: Vec<Option<f64>>,
    /// The variant with the absolute value outside the history expectation,
    /// present when `π_e` is memoryless.
    pub tilde: Option<f64>,
}

/// `C_eff` with single-step operators. `B̂` comes from `m_hat`; the outcome
/// matrices and beliefs come from `m_star`.
pub fn c_eff_single(m_star: &TabularPomdp, m_hat: &TabularPomdp, pi_e: &Policy, pi_b: &Policy, cap: u64) -> Result<CeffReport> {
    same_shape(m_star, m_hat)?;
    let star = build_oom(m_star, RevealMode::Single, None, cap)?;
    let hat = build_oom(m_hat, RevealMode::Single, None, cap)?;
    ceff(m_star, &star, &hat, pi_e, pi_b, cap)
}

/// `C_eff` with multi-step operators under the memoryless behavior policy.
pub fn c_eff_multi(m_star: &TabularPomdp, m_hat: &TabularPomdp, pi_e: &Policy, pi_b: &Policy, cap: u64) -> Result<CeffReport> {
    same_shape(m_star, m_hat)?;
    pi_b.require_memoryless("the multi-step effective coefficient")?;
    let star = build_oom(m_star, RevealMode::Multi, Some(pi_b), cap)?;
    let hat = build_oom(m_hat, RevealMode::Multi, Some(pi_b), cap)?;
    ceff(m_star, &star, &hat, pi_e, pi_b, cap)
}

fn same_shape(a: &TabularPomdp, b: &TabularPomdp) -> Result<()> {
    if a.same_observables(b) {
        Ok(())
    } else {
        Err(Error::Structural("models differ in horizon, actions or observations".into()))
    }
}

/// `(B̂_h(o,a) − B_h(o,a)) K_h` for every step below `H-1`, plus whether the
/// step's operators coincide.
fn error_operators(
    model: &TabularPomdp,
    star: &OomModel,
    hat: &OomModel,
) -> Vec<(Vec<Vec<DMatrix<f64>>>, bool)> {
    (0..model.horizon() - 1)
        .map(|h| {
            let k = star.outcome(h);
            let mut same = true;
            let per_obs = (0..model.obs_count(h))
                .map(|o| {
                    (0..model.action_count())
                        .map(|a| {
                            let diff = hat.operator(h, o, a) - star.operator(h, o, a);
                            if diff.amax() > SAME_OPERATOR_TOL {
                                same = false;
                            }
                            diff * k
                        })
                        .collect()
                })
                .collect();
            (per_obs, same)
        })
        .collect()
}

/// `Σ_τ P^π(τ) Σ_{o,a} π(a|τ,o) ‖D_h(o,a) b_S(τ)‖₁` for every step.
fn expectation(model: &TabularPomdp, ops: &[(Vec<Vec<DMatrix<f64>>>, bool)], pi: &Policy) -> Vec<f64> {
    let steps = ops.len();
    let mut sums = vec![0.0; steps];
    if steps == 0 {
        return sums;
    }
    walk_histories(model, Some(pi), steps - 1, true, &mut |node| {
        let k = node.history.len();
        if ops[k].1 {
            return;
        }
        let alpha = DVector::from_column_slice(node.alpha);
        for o in 0..model.obs_count(k) {
            let probs = pi.action_probs(node.history, o);
            for (a, &pa) in probs.iter().enumerate() {
                let w = node.policy_prob * pa;
                if w == 0.0 {
                    continue;
                }
                // P(τ) b_S(τ) = α, so the weight is π(τ) π(a|τ,o)
                sums[k] += w * vec_l1((&ops[k].0[o][a] * &alpha).as_slice());
            }
        }
    });
    sums
}

fn ceff(
    model: &TabularPomdp,
    star: &OomModel,
    hat: &OomModel,
    pi_e: &Policy,
    pi_b: &Policy,
    cap: u64,
) -> Result<CeffReport> {
    pi_e.check_against(model)?;
    pi_b.check_against(model)?;
    let h = model.horizon();
    check_cap(history_count(model, h.saturating_sub(1)), cap)?;
    let ops = error_operators(model, star, hat);
    let numerators = expectation(model, &ops, pi_e);
    let denominators = expectation(model, &ops, pi_b);

    let ratios: Vec<Option<f64>> = (0..ops.len())
        .map(|k| ratio(ops[k].1, numerators[k], denominators[k]))
        .collect();
    let value = max_ratio(&ratios);

    let tilde = if pi_e.is_memoryless() {
        let mut per_step = Vec::with_capacity(ops.len());
        for k in 0..ops.len() {
            let mu = state_marginal(model, pi_e, k, cap)?;
            let mut num = 0.0;
            if !ops[k].1 {
                for o in 0..model.obs_count(k) {
                    for (a, &pa) in pi_e.memoryless_probs(k, o).iter().enumerate() {
                        if pa != 0.0 {
                            num += pa * vec_l1((&ops[k].0[o][a] * &mu).as_slice());
                        }
                    }
                }
            }
            per_step.push(ratio(ops[k].1, num, denominators[k]));
        }
        Some(max_ratio(&per_step))
    } else {
        None
    };

    Ok(CeffReport { value, numerators, denominators, ratios, tilde })
}

fn ratio(same: bool, num: f64, den: f64) -> Option<f64> {
    if same || (num == 0.0 && den == 0.0) {
        None
    } else if den == 0.0 {
        Some(f64::INFINITY)
    } else {
        Some(num / den)
    }
}

/// Largest non-skipped ratio, or 1 when every step is 0/0.
fn max_ratio(ratios: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = ratios.iter().flatten().copied().collect();
    if present.is_empty() {
        1.0
    } else {
        present.into_iter().fold(0.0, f64::max)
    }
}

/// `max_{h < H-1} max_{s,a} d^{π_e}_h(s,a) / d^{π_b}_h(s,a)`, skipping 0/0 entries.
pub fn occupancy_ratio_bound(model: &TabularPomdp, pi_e: &Policy, pi_b: &Policy, cap: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for h in 0..model.horizon() - 1 {
        let de = latent_occupancy(model, pi_e, h, cap)?;
        let db = latent_occupancy(model, pi_b, h, cap)?;
        for (e, b) in de.iter().zip(db.iter()) {
            if *e == 0.0 {
                continue;
            }
            worst = worst.max(if *b == 0.0 { f64::INFINITY } else { e / b });
        }
    }
    Ok(worst)
}
