//! Small dense helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Relative pivot below which a Cholesky factor is treated as rank deficient.
const PIVOT_RTOL: f64 = 1e-11;

/// Cholesky factorization that also rejects numerically singular matrices.
pub(crate) fn strict_cholesky(a: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let n = a.nrows();
    if n == 0 {
        return Cholesky::new(a.clone());
    }
    let max_diag = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    if !max_diag.is_finite() {
        return None;
    }
    let chol = Cholesky::new(a.clone())?;
    let l = chol.l_dirty();
    let min_pivot = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot <= PIVOT_RTOL * max_diag.max(f64::MIN_POSITIVE) {
        return None;
    }
    Some(chol)
}

/// Factor a symmetric positive semi-definite matrix, adding `jitter * scale`
/// to the diagonal when it is singular. `scale` is the mean diagonal (at least 1).
/// Returns the factor and whether jitter was needed.
pub(crate) fn cholesky_with_jitter(
    a: &DMatrix<f64>,
    jitter: f64,
) -> Option<(Cholesky<f64, Dyn>, bool)> {
    if let Some(c) = strict_cholesky(a) {
        return Some((c, false));
    }
    let n = a.nrows();
    let scale = if n == 0 {
        1.0
    } else {
        ((0..n).map(|i| a[(i, i)].abs()).sum::<f64>() / n as f64).max(1.0)
    };
    let mut b = a.clone();
    let mut eps = jitter * scale;
    for _ in 0..8 {
        for i in 0..n {
            b[(i, i)] = a[(i, i)] + eps;
        }
        if let Some(c) = Cholesky::new(b.clone()) {
            return Some((c, true));
        }
        eps *= 100.0;
    }
    None
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// X'X and X'y in one pass over the rows.
pub(crate) fn gram(x: &DMatrix<f64>, y: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let xt = x.transpose();
    let g = &xt * x;
    let xy = &xt * DVector::from_column_slice(y);
    (g, xy)
}
