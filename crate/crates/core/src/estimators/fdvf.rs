use nalgebra::{DMatrix, DVector};

use crate::coverage::{decode_future, outcome_matrix};
use crate::error::{Error, Result};
use crate::linalg::solve;
use crate::pomdp::{latent_value, state_marginal, Policy, TabularPomdp};

/// A future-dependent value function at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Fdvf {
    pub step: usize,
    /// `V_{F,h}(f)` indexed like the rows of the outcome matrix. Futures with
    /// zero probability under the behavior policy get 0.
    pub values: DVector<f64>,
    /// `R⁺(f)`: the summed reward of each future.
    pub returns: DVector<f64>,
    /// `V^{π_e}_{S,h}`.
    pub latent_values: DVector<f64>,
    /// `‖U_{F,h}ᵀ V_{F,h} − V_{S,h}‖_∞`.
    pub residual: f64,
    pub dropped_futures: usize,
}

/// `R⁺(f)` for every future starting at step `h`.
pub fn future_returns(model: &TabularPomdp, h: usize, rows: usize) -> DVector<f64> {
    let last = model.horizon() - 1;
    DVector::from_iterator(
        rows,
        (0..rows).map(|idx| {
            let (pairs, last_obs) = decode_future(model, h, idx);
            pairs.iter().enumerate().map(|(i, x)| model.reward(h + i, x.obs)).sum::<f64>()
                + model.reward(last, last_obs)
        }),
    )
}

/// Builds `V_F = (Z^{R,p})⁻¹ U diag(p) (Σ^{R,p})^{-T} V_S` with `p = d^{π_b}_h`
/// and `Z^{R,p}(f) = (U p)(f) / R⁺(f)`.
pub fn fdvf_construct(model: &TabularPomdp, pi_b: &Policy, pi_e: &Policy, h: usize, cap: u64) -> Result<Fdvf> {
    pi_b.require_memoryless("the future-dependent value function")?;
    pi_e.require_memoryless("the future-dependent value function")?;
    let u = outcome_matrix(model, pi_b, h, cap)?;
    let p = state_marginal(model, pi_b, h, cap)?;
    if let Some(state) = p.iter().position(|&x| x <= 0.0) {
        return Err(Error::DegeneratePrior { step: h, state });
    }
    let returns = future_returns(model, h, u.nrows());
    let zp = &u * &p;

    // 1 / Z^{R,p}(f) = R⁺(f) / Z^p(f) on positive-probability futures
    let mut inv_z = DVector::zeros(u.nrows());
    let mut dropped = 0;
    for f in 0..u.nrows() {
        if zp[f] <= 0.0 {
            dropped += 1;
            continue;
        }
        if returns[f] <= 0.0 {
            return Err(Error::DegenerateWeight { step: h, future: f });
        }
        inv_z[f] = returns[f] / zp[f];
    }

    let s = u.ncols();
    let mut scaled_u = u.clone();
    for (f, mut row) in scaled_u.row_iter_mut().enumerate() {
        row *= inv_z[f];
    }
    // Σ^{R,p} = diag(p) Uᵀ (Z^{R,p})⁻¹ U
    let sigma = DMatrix::from_diagonal(&p) * u.tr_mul(&scaled_u);
    let v_s = latent_value(model, pi_e, h)?;
    let y = solve(&sigma.transpose(), &DMatrix::from_column_slice(s, 1, v_s.as_slice()))
        .ok_or(Error::RevealingViolation { step: h })?;
    let py = DVector::from_iterator(s, (0..s).map(|i| p[i] * y[(i, 0)]));
    let values = (&u * py).component_mul(&inv_z);

    let residual = (u.tr_mul(&values) - &v_s).amax();
    Ok(Fdvf { step: h, values, returns, latent_values: v_s, residual, dropped_futures: dropped })
}
