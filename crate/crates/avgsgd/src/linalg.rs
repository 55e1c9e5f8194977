//! Small shared helpers for symmetric-matrix work.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Smallest and largest eigenvalue of a symmetric matrix.
pub(crate) fn symmetric_extreme_eigenvalues(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &e in eig.eigenvalues.iter() {
        min = min.min(e);
        max = max.max(e);
    }
    (min, max)
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_extreme_eigenvalues(m).0
}

/// Largest absolute entry; the scale used by relative PSD tolerances.
pub(crate) fn max_abs_entry(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

/// Replaces `m` with `(m + m^T)/2` to stop symmetry drift.
pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Errors unless `m` is square and symmetric to `tol` relative to its
/// largest entry.
pub(crate) fn check_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    let mut scale = 0.0f64;
    let mut gap = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            gap = gap.max((m[(i, j)] - m[(j, i)]).abs());
            scale = scale.max(m[(i, j)].abs()).max(m[(j, i)].abs());
        }
        scale = scale.max(m[(i, i)].abs());
    }
    if gap > tol * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Asymmetric {
            asymmetry: gap / scale.max(f64::MIN_POSITIVE),
        });
    }
    Ok(())
}
