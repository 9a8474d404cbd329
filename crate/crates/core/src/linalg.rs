//! Thin dense linear-algebra wrappers.
//!
//! Instances are capped at desk scale, so direct factorizations are fine.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};

/// Solve `a x = b` by LU with partial pivoting and verify the residual in
/// max norm.
pub fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>, max_residual: f64) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| CoreError::SingularSystem("LU solve returned no solution".into()))?;
    let resid = (a * &x - b).amax();
    if !resid.is_finite() || resid > max_residual {
        return Err(CoreError::SingularSystem(format!(
            "residual {resid:.3e} exceeds {max_residual:.3e}"
        )));
    }
    Ok(x)
}

/// Largest and smallest singular values of a rectangular matrix.
pub fn singular_extremes(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    let svd = m.clone().svd(false, false);
    let sv = &svd.singular_values;
    if sv.is_empty() {
        return Err(CoreError::InvalidInput("empty matrix".into()));
    }
    let mut hi = f64::MIN;
    let mut lo = f64::MAX;
    for &s in sv.iter() {
        hi = hi.max(s);
        lo = lo.min(s);
    }
    Ok((hi, lo))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn symmetric_lambda_min(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min)
}
