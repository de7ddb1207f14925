//! Small dense linear-algebra helpers shared by the coverage and operator modules.

use nalgebra::{DMatrix, DVector};

/// Relative cutoff below which the smallest singular value is treated as zero.
/// Equivalent to a condition-number cap of 1e12.
pub const SINGULAR_RATIO: f64 = 1e-12;

/// Induced 1-norm: the maximum absolute column sum.
pub fn l1_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Extreme singular values `(min, max)`.
pub fn singular_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    (min, max)
}

/// Square matrix singularity under the configured cutoff.
pub fn is_singular(m: &DMatrix<f64>) -> bool {
    let (min, max) = singular_range(m);
    max == 0.0 || !min.is_finite() || min < SINGULAR_RATIO * max
}

/// Pivoted-LU solve of `a * x = b`; `None` when `a` is singular under the cutoff.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if is_singular(a) {
        return None;
    }
    a.clone().lu().solve(b)
}

/// Inverse computed by solving against the identity.
pub fn inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    solve(a, &DMatrix::identity(a.nrows(), a.ncols()))
}

/// `‖a⁻¹‖₁`, or infinity when `a` is singular.
pub fn inverse_l1(a: &DMatrix<f64>) -> f64 {
    inverse(a).map_or(f64::INFINITY, |inv| l1_norm(&inv))
}

/// Number of rows with at least one nonzero entry (an upper bound on rank).
pub fn nonzero_rows(m: &DMatrix<f64>) -> usize {
    m.row_iter().filter(|r| r.iter().any(|&x| x != 0.0)).count()
}

/// Weighted Gram matrix `Mᵀ diag(1/w) M` where `w` is the row sum of `M` weighted by
/// `col_weights`. Rows with zero weight are dropped.
pub fn weighted_gram(m: &DMatrix<f64>, col_weights: &DVector<f64>) -> DMatrix<f64> {
    let s = m.ncols();
    let mut out = DMatrix::zeros(s, s);
    for row in m.row_iter() {
        let w: f64 = row.iter().zip(col_weights.iter()).map(|(x, p)| x * p).sum();
        if w <= 0.0 {
            continue;
        }
        for j in 0..s {
            let rj = row[j];
            if rj == 0.0 {
                continue;
            }
            for i in 0..s {
                out[(i, j)] += row[i] * rj / w;
            }
        }
    }
    out
}
