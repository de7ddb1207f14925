//! Coverage and revealing coefficients, and the revealing pre-filter.

mod futures;
mod report;

pub use futures::{decode_future, future_count, future_index, outcome_matrix};
pub use report::{coverage_report, Coefficient, CoverageReport, ReportOptions};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, inverse_l1, is_singular, nonzero_rows, singular_range, weighted_gram};
use crate::pomdp::walk::{check_cap, forward, walk_histories};
use crate::pomdp::{history_count, sample_trajectory, state_marginal, Policy, TabularPomdp};

/// Induced 1-norm (maximum absolute column sum).
pub fn matrix_l1_norm(m: &DMatrix<f64>) -> f64 {
    linalg::l1_norm(m)
}

/// A revealing matrix and its coefficient `‖Σ⁻¹‖₁` (infinite when singular).
#[derive(Debug, Clone, PartialEq)]
pub struct Revealing {
    pub matrix: DMatrix<f64>,
    pub coefficient: f64,
}

impl Revealing {
    fn from_matrix(matrix: DMatrix<f64>, rank_bound: usize) -> Self {
        let coefficient =
            if rank_bound < matrix.ncols() { f64::INFINITY } else { inverse_l1(&matrix) };
        Self { matrix, coefficient }
    }

    pub fn is_singular(&self) -> bool {
        self.coefficient.is_infinite()
    }
}

/// `C_A`: the largest inverse behavior probability over reachable contexts.
pub fn compute_c_a(model: &TabularPomdp, pi_b: &Policy, cap: u64) -> Result<f64> {
    pi_b.check_against(model)?;
    let mut worst: f64 = 0.0;
    let mut consider = |probs: &[f64]| {
        for &p in probs {
            worst = worst.max(if p > 0.0 { 1.0 / p } else { f64::INFINITY });
        }
    };
    if pi_b.is_memoryless() {
        for h in 0..model.horizon() {
            let mu = state_marginal(model, pi_b, h, cap)?;
            let obs = model.emission(h) * mu;
            for (o, &p) in obs.iter().enumerate() {
                if p > 0.0 {
                    consider(pi_b.memoryless_probs(h, o));
                }
            }
        }
    } else {
        check_cap(history_count(model, model.horizon()), cap)?;
        walk_histories(model, Some(pi_b), model.horizon() - 1, true, &mut |node| {
            let k = node.history.len();
            let e = model.emission(k);
            for o in 0..model.obs_count(k) {
                let reach: f64 = node.alpha.iter().enumerate().map(|(s, x)| x * e[(o, s)]).sum();
                if reach > 0.0 {
                    consider(pi_b.action_probs(node.history, o));
                }
            }
        });
    }
    Ok(worst)
}

/// How `Σ_{H,h}` is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HistoryMode {
    Exact { cap: u64 },
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaHistory {
    pub matrix: DMatrix<f64>,
    /// `1/σ_min`, infinite when singular.
    pub c_h: f64,
    pub method: SigmaMethod,
}

/// `Σ_{H,k} = E_{π_b}[b_S(τ) b_S(τ)ᵀ]` over histories `τ` of `k` pairs, `k < H-1`.
pub fn sigma_history(model: &TabularPomdp, pi_b: &Policy, k: usize, mode: HistoryMode) -> Result<SigmaHistory> {
    pi_b.check_against(model)?;
    if k + 1 >= model.horizon() {
        return Err(Error::Parameter(format!(
            "belief coverage is defined for steps below {}, got {k}",
            model.horizon() - 1
        )));
    }
    let s = model.state_count(k);
    let mut sigma = DMatrix::zeros(s, s);
    let method = match mode {
        HistoryMode::Exact { cap } => {
            check_cap(history_count(model, k), cap)?;
            walk_histories(model, Some(pi_b), k, true, &mut |node| {
                if node.history.len() != k {
                    return;
                }
                let total: f64 = node.alpha.iter().sum();
                if total <= 0.0 || node.policy_prob == 0.0 {
                    return;
                }
                let a = DVector::from_column_slice(node.alpha);
                sigma.ger(node.policy_prob / total, &a, &a, 1.0);
            });
            SigmaMethod::Exact
        }
        HistoryMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::Parameter("Monte Carlo mode needs samples > 0".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..samples {
                let tau = sample_trajectory(model, pi_b, &mut rng);
                let alpha = forward(model, &tau.steps[..k]);
                let total: f64 = alpha.iter().sum();
                let b = DVector::from_iterator(s, alpha.iter().map(|x| x / total));
                sigma.ger(1.0 / samples as f64, &b, &b, 1.0);
            }
            SigmaMethod::MonteCarlo
        }
    };
    let (min, _) = singular_range(&sigma);
    let c_h = if is_singular(&sigma) { f64::INFINITY } else { 1.0 / min };
    Ok(SigmaHistory { matrix: sigma, c_h, method })
}

/// `Σ_{O,h} = O_hᵀ W_h⁻¹ O_h` with `W_h = diag(O_h 1)`, zero rows dropped.
pub fn sigma_obs(model: &TabularPomdp, h: usize) -> Revealing {
    let e = model.emission(h);
    Revealing::from_matrix(weighted_gram(e, &DVector::from_element(e.ncols(), 1.0)), nonzero_rows(e))
}

/// `Σ_{F,h} = U_{F,h}ᵀ Z_h⁻¹ U_{F,h}`, zero rows dropped.
pub fn sigma_future(model: &TabularPomdp, pi_b: &Policy, h: usize, cap: u64) -> Result<Revealing> {
    let u = outcome_matrix(model, pi_b, h, cap)?;
    Ok(sigma_future_from(&u))
}

pub(crate) fn sigma_future_from(u: &DMatrix<f64>) -> Revealing {
    let rank_bound = nonzero_rows(u);
    Revealing::from_matrix(weighted_gram(u, &DVector::from_element(u.ncols(), 1.0)), rank_bound)
}

/// `Σ^{p}_{F,h} = diag(p) Uᵀ (Z^p)⁻¹ U` with `p = d^{π_b}_h`.
pub fn sigma_future_weighted(model: &TabularPomdp, pi_b: &Policy, h: usize, cap: u64) -> Result<Revealing> {
    let u = outcome_matrix(model, pi_b, h, cap)?;
    let p = state_marginal(model, pi_b, h, cap)?;
    if let Some(state) = p.iter().position(|&x| x <= 0.0) {
        return Err(Error::DegeneratePrior { step: h, state });
    }
    let rank_bound = nonzero_rows(&u);
    let gram = weighted_gram(&u, &p);
    let matrix = DMatrix::from_diagonal(&p) * gram;
    Ok(Revealing::from_matrix(matrix, rank_bound))
}

/// Which revealing coefficient the pre-filter checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevealMode {
    Single,
    Multi,
}

impl std::str::FromStr for RevealMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::Single),
            "multi" => Ok(Self::Multi),
            _ => Err(Error::Parameter(format!("unknown mode '{s}' (expected single or multi)"))),
        }
    }
}

/// Largest per-step revealing coefficient over steps `0..H-1`.
pub fn max_revealing_coefficient(model: &TabularPomdp, pi_b: &Policy, mode: RevealMode, cap: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for h in 0..model.horizon() - 1 {
        let c = match mode {
            RevealMode::Single => sigma_obs(model, h).coefficient,
            RevealMode::Multi => sigma_future(model, pi_b, h, cap)?.coefficient,
        };
        worst = worst.max(c);
        if worst.is_infinite() {
            break;
        }
    }
    Ok(worst)
}

/// Indices of the models whose revealing coefficient is at most `threshold` at
/// every step, in input order.
pub fn prefilter(
    models: &[TabularPomdp],
    pi_b: &Policy,
    mode: RevealMode,
    threshold: f64,
    cap: u64,
) -> Result<Vec<usize>> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(Error::Parameter("pre-filter threshold must be positive".into()));
    }
    if mode == RevealMode::Multi {
        pi_b.require_memoryless("multi-step pre-filtering")?;
    }
    if threshold.is_infinite() {
        return Ok((0..models.len()).collect());
    }
    let mut keep = Vec::new();
    for (i, m) in models.iter().enumerate() {
        if max_revealing_coefficient(m, pi_b, mode, cap)? <= threshold {
            keep.push(i);
        }
    }
    Ok(keep)
}
