//! Futures `f_h = (o_h, a_h, …, o_{H-2}, a_{H-2}, o_{H-1})` and the outcome
//! matrix `U_{F,h}(f, s) = P^{π_b}(f | s_h = s)`.
//!
//! Futures are indexed in mixed radix, most significant digit first, so the
//! index order is lexicographic in `(o_h, a_h, …, o_{H-1})`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::pomdp::walk::check_cap;
use crate::pomdp::{ObsAction, Policy, TabularPomdp};

/// `|F_h| = Π_{k=h}^{H-2} (|O_k|·A) · |O_{H-1}|`.
pub fn future_count(model: &TabularPomdp, h: usize) -> f64 {
    let last = model.horizon() - 1;
    (h..last)
        .map(|k| (model.obs_count(k) * model.action_count()) as f64)
        .product::<f64>()
        * model.obs_count(last) as f64
}

/// Mixed-radix index of a future starting at step `h`.
pub fn future_index(model: &TabularPomdp, h: usize, pairs: &[ObsAction], last_obs: usize) -> usize {
    let mut idx = 0;
    for (k, x) in pairs.iter().enumerate() {
        idx = (idx * model.obs_count(h + k) + x.obs) * model.action_count() + x.action;
    }
    idx * model.obs_count(model.horizon() - 1) + last_obs
}

/// Inverse of [`future_index`].
pub fn decode_future(model: &TabularPomdp, h: usize, mut index: usize) -> (Vec<ObsAction>, usize) {
    let last = model.horizon() - 1;
    let a = model.action_count();
    let last_obs = index % model.obs_count(last);
    index /= model.obs_count(last);
    let mut pairs = vec![ObsAction::new(0, 0); last - h];
    for k in (h..last).rev() {
        let action = index % a;
        index /= a;
        let obs = index % model.obs_count(k);
        index /= model.obs_count(k);
        pairs[k - h] = ObsAction::new(obs, action);
    }
    (pairs, last_obs)
}

/// `U_{F,h}` for a memoryless behavior policy; rows follow [`future_index`].
pub fn outcome_matrix(model: &TabularPomdp, pi_b: &Policy, h: usize, cap: u64) -> Result<DMatrix<f64>> {
    pi_b.require_memoryless("the outcome matrix")?;
    pi_b.check_against(model)?;
    if h >= model.horizon() {
        return Err(Error::Parameter(format!("step {h} >= horizon {}", model.horizon())));
    }
    let rows = future_count(model, h);
    check_cap(rows, cap)?;
    let rows = rows as usize;
    let s = model.state_count(h);
    let mut u = DMatrix::zeros(rows, s);
    // alpha[k] has shape |S_k| x |S_h|: unnormalized state given the start state
    let start = DMatrix::identity(s, s);
    fill(model, pi_b, h, 1.0, &start, 0, &mut u);
    Ok(u)
}

/// Number of futures below a node at step `k`.
fn subtree(model: &TabularPomdp, k: usize) -> usize {
    future_count(model, k) as usize
}

fn fill(
    model: &TabularPomdp,
    pi_b: &Policy,
    k: usize,
    weight: f64,
    alpha: &DMatrix<f64>,
    base: usize,
    u: &mut DMatrix<f64>,
) {
    let last = model.horizon() - 1;
    let e = model.emission(k);
    if k == last {
        // rows base..base+|O_last|
        let emitted = e * alpha;
        for o in 0..model.obs_count(k) {
            for j in 0..alpha.ncols() {
                u[(base + o, j)] = weight * emitted[(o, j)];
            }
        }
        return;
    }
    let child = subtree(model, k + 1);
    let a_count = model.action_count();
    for o in 0..model.obs_count(k) {
        // diag(O_k(o|·)) α
        let mut masked = alpha.clone();
        let mut any = false;
        for (i, mut row) in masked.row_iter_mut().enumerate() {
            let w = e[(o, i)];
            row *= w;
            any |= w != 0.0 && row.iter().any(|&x| x != 0.0);
        }
        if !any {
            continue;
        }
        let probs = pi_b.memoryless_probs(k, o);
        for a in 0..a_count {
            let pa = probs[a];
            if pa == 0.0 {
                continue;
            }
            let next = model.transition(k, a) * &masked;
            let offset = base + (o * a_count + a) * child;
            fill(model, pi_b, k + 1, weight * pa, &next, offset, u);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::theorem3_model;

    #[test]
    fn index_round_trips() {
        let m = theorem3_model(4).unwrap();
        for idx in 0..future_count(&m, 1) as usize {
            let (pairs, last) = decode_future(&m, 1, idx);
            assert_eq!(future_index(&m, 1, &pairs, last), idx);
        }
    }
}
