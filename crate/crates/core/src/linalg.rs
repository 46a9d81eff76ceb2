//! Small shared linear-algebra helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{CarlError, Result};

/// Least-squares fit of `y ~ X` via SVD.
///
/// With at least as many rows as columns, a rank-deficient design is an
/// error (true collinearity). Saturated systems with fewer rows than
/// columns fall back to the minimum-norm interpolating solution so that
/// tiny worked examples still run.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let cols = x.ncols();
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = max_sv * 1e-10 * (x.nrows().max(cols) as f64);
    if x.nrows() >= cols {
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        if rank < cols {
            return Err(CarlError::RankDeficient(format!(
                "design has rank {rank} < {cols} columns"
            )));
        }
    }
    svd.solve(y, tol)
        .map_err(|e| CarlError::RankDeficient(e.to_string()))
}

/// Mean of a slice; 0 for empty input.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Population variance; 0 for fewer than two values.
pub fn pop_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64
}

pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Pearson correlation; 0 when either side is constant.
#[cfg(test)]
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ma, mb) = (mean(a), mean(b));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}
