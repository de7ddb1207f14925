//! Model-based evaluation (pre-filter, maximum likelihood, rollout), the
//! importance-sampling baseline, the restricted policy oracle, and the
//! diagnostic coefficients.

mod ceff;
mod fdvf;
mod transcript;

pub use ceff::{c_eff_multi, c_eff_single, occupancy_ratio_bound, CeffReport};
pub use fdvf::{fdvf_construct, future_returns, Fdvf};
pub use transcript::{restricted_policy_oracle, Transcript};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::{prefilter, Coefficient, RevealMode};
use crate::error::{Error, Result};
use crate::pomdp::walk::env_prob_of;
use crate::pomdp::{policy_value, Dataset, Policy, TabularPomdp};

/// Per-trajectory probability floor used when floor mode is enabled.
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;

/// A finite set of candidate models sharing horizon, actions and observation
/// spaces. State spaces may differ between members.
#[derive(Debug, Clone)]
pub struct ModelClass {
    pub models: Vec<TabularPomdp>,
    pub true_index: Option<usize>,
}

impl ModelClass {
    pub fn new(models: Vec<TabularPomdp>, true_index: Option<usize>) -> Result<Self> {
        if let Some(first) = models.first() {
            if let Some(i) = models.iter().position(|m| !m.same_observables(first)) {
                return Err(Error::Structural(format!(
                    "model {i} differs from model 0 in horizon, actions or observations"
                )));
            }
        }
        if let Some(t) = true_index {
            if t >= models.len() {
                return Err(Error::Parameter(format!("true index {t} out of range")));
            }
        }
        Ok(Self { models, true_index })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpeMethod {
    ModelBasedMle,
    ImportanceSampling,
    TrueValue,
}

impl OpeMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            OpeMethod::ModelBasedMle => "model-based-mle",
            OpeMethod::ImportanceSampling => "importance-sampling",
            OpeMethod::TrueValue => "true-value",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OpeResult {
    pub estimate: f64,
    pub method: OpeMethod,
    pub selected_model_index: Option<usize>,
    pub diagnostics: BTreeMap<String, Coefficient>,
}

impl OpeResult {
    fn new(estimate: f64, method: OpeMethod) -> Self {
        Self { estimate, method, selected_model_index: None, diagnostics: BTreeMap::new() }
    }

    fn note(&mut self, key: &str, value: f64) {
        self.diagnostics.insert(key.to_string(), Coefficient(value));
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

/// Per-trajectory `log P^{π_b}_M(τ)`.
pub fn trajectory_log_likelihoods(
    model: &TabularPomdp,
    pi_b: &Policy,
    data: &Dataset,
    floor: bool,
) -> Result<Vec<f64>> {
    pi_b.check_against(model)?;
    data.validate(model)?;
    let probs: Vec<f64> = data
        .trajectories
        .par_iter()
        .map(|t| env_prob_of(model, &t.steps) * pi_b.sequence_prob(&t.steps))
        .collect();
    probs
        .into_iter()
        .enumerate()
        .map(|(index, p)| {
            if p > 0.0 {
                Ok(p.ln())
            } else if floor {
                Ok(LIKELIHOOD_FLOOR.ln())
            } else {
                Err(Error::ZeroLikelihood { index })
            }
        })
        .collect()
}

/// `Σ_i log P^{π_b}_M(τ_i)`, including the behavior-policy factor.
pub fn log_likelihood(model: &TabularPomdp, pi_b: &Policy, data: &Dataset, floor: bool) -> Result<f64> {
    Ok(trajectory_log_likelihoods(model, pi_b, data, floor)?.iter().sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleSelection {
    /// Index into the slice passed to [`mle_select`].
    pub index: usize,
    pub log_likelihoods: Vec<f64>,
}

/// Maximum-likelihood model; ties go to the lowest index.
pub fn mle_select(models: &[TabularPomdp], pi_b: &Policy, data: &Dataset, floor: bool) -> Result<MleSelection> {
    if models.is_empty() {
        return Err(Error::EmptyClass);
    }
    let log_likelihoods = models
        .iter()
        .map(|m| log_likelihood(m, pi_b, data, floor))
        .collect::<Result<Vec<_>>>()?;
    Ok(MleSelection { index: argmax_first(&log_likelihoods), log_likelihoods })
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
pub struct OpeConfig {
    pub mode: RevealMode,
    /// Revealing-coefficient bound for pre-filtering; infinity disables it.
    pub threshold: f64,
    pub floor: bool,
    pub cap: u64,
}

/// Pre-filter, select by maximum likelihood, and evaluate `π_e` in the selected model.
pub fn model_based_ope(
    class: &ModelClass,
    pi_b: &Policy,
    pi_e: &Policy,
    data: &Dataset,
    config: &OpeConfig,
) -> Result<OpeResult> {
    let survivors = prefilter(&class.models, pi_b, config.mode, config.threshold, config.cap)?;
    if survivors.is_empty() {
        return Err(Error::EmptyClass);
    }
    let filtered: Vec<TabularPomdp> = survivors.iter().map(|&i| class.models[i].clone()).collect();
    let selection = mle_select(&filtered, pi_b, data, config.floor)?;
    let chosen = survivors[selection.index];
    let estimate = policy_value(&class.models[chosen], pi_e, config.cap)?;

    let mut result = OpeResult::new(estimate, OpeMethod::ModelBasedMle);
    result.selected_model_index = Some(chosen);
    result.note("n", data.n() as f64);
    result.note("candidates_after_prefilter", survivors.len() as f64);
    result.note("selected_log_likelihood", selection.log_likelihoods[selection.index]);
    if let Some(t) = class.true_index {
        let truth = policy_value(&class.models[t], pi_e, config.cap)?;
        result.note("true_value", truth);
        result.note("abs_error", (truth - estimate).abs());
    }
    Ok(result)
}

/// `J(π_e)` computed in a known model.
pub fn true_value(model: &TabularPomdp, pi_e: &Policy, cap: u64) -> Result<OpeResult> {
    Ok(OpeResult::new(policy_value(model, pi_e, cap)?, OpeMethod::TrueValue))
}

/// Per-trajectory importance weights `Π_h π_e(a_h|·)/π_b(a_h|·)` over all steps.
pub fn importance_weights(data: &Dataset, pi_e: &Policy, pi_b: &Policy) -> Result<Vec<f64>> {
    data.trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut w = 1.0;
            for k in 0..t.steps.len() {
                let x = t.steps[k];
                let hist = &t.steps[..k];
                let b = pi_b.action_probs(hist, x.obs)[x.action];
                if b <= 0.0 {
                    return Err(Error::ZeroBehaviorProbability { trajectory: i, step: k, action: x.action });
                }
                w *= pi_e.action_probs(hist, x.obs)[x.action] / b;
            }
            Ok(w)
        })
        .collect()
}

/// Full-trajectory importance sampling. Unclamped, so the estimate can leave `[0, H]`.
pub fn importance_sampling_ope(data: &Dataset, pi_e: &Policy, pi_b: &Policy) -> Result<OpeResult> {
    if data.n() == 0 {
        return Err(Error::Parameter("importance sampling needs a nonempty dataset".into()));
    }
    if pi_e.action_count() != pi_b.action_count() {
        return Err(Error::Structural("policies disagree on the action count".into()));
    }
    let weights = importance_weights(data, pi_e, pi_b)?;
    let terms: Vec<f64> = weights.iter().zip(&data.trajectories).map(|(w, t)| w * t.ret()).collect();
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let var = if terms.len() > 1 {
        terms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let w_sum: f64 = weights.iter().sum();
    let w_sq: f64 = weights.iter().map(|w| w * w).sum();
    let mut result = OpeResult::new(mean, OpeMethod::ImportanceSampling);
    result.note("n", n);
    result.note("std_err", (var / n).sqrt());
    result.note("max_weight", weights.iter().cloned().fold(0.0, f64::max));
    result.note("effective_sample_size", if w_sq > 0.0 { w_sum * w_sum / w_sq } else { 0.0 });
    Ok(result)
}

/// `min_M (1/n) Σ_i [log P_{M*}(τ_i) − log P_M(τ_i)]`.
pub fn eps_approx(models: &[TabularPomdp], m_star: &TabularPomdp, pi_b: &Policy, data: &Dataset, floor: bool) -> Result<f64> {
    if models.is_empty() {
        return Err(Error::EmptyClass);
    }
    if data.n() == 0 {
        return Err(Error::Parameter("approximation error needs a nonempty dataset".into()));
    }
    let star = trajectory_log_likelihoods(m_star, pi_b, data, floor)?;
    let mut best = f64::INFINITY;
    for m in models {
        let ll = trajectory_log_likelihoods(m, pi_b, data, floor)?;
        let gap = star.iter().zip(&ll).map(|(a, b)| a - b).sum::<f64>() / data.n() as f64;
        best = best.min(gap);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax_first(&[-1.0, -1.0, -2.0]), 0);
        assert_eq!(argmax_first(&[-3.0, -1.0, -1.0]), 1);
        assert_eq!(argmax_first(&[f64::NEG_INFINITY]), 0);
    }
}
