//! Dense linear algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Solves `(a + ridge·I) x = b` for symmetric positive semi-definite `a`.
///
/// `ridge` is scaled by the mean diagonal of `a`. If the Cholesky
/// factorization still fails, the ridge is raised tenfold a few times.
pub fn solve_ridged(a: &DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    let n = a.nrows();
    let mean_diag = if n == 0 { 0.0 } else { a.trace() / n as f64 };
    let base = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut lambda = ridge * base;
    for _ in 0..8 {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += lambda;
        }
        if let Some(chol) = m.cholesky() {
            return Ok(chol.solve(b));
        }
        lambda = if lambda > 0.0 { lambda * 10.0 } else { 1e-12 * base };
    }
    Err(Error::Numerical(format!(
        "matrix of order {n} is not positive definite even with ridge {lambda:e}"
    )))
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidArgument("covariance matrix is not positive definite".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_system_is_regularized() {
        // Duplicated column: rank one.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let x = solve_ridged(&a, &b, 1e-6).unwrap();
        assert!((x[0] - x[1]).abs() < 1e-6);
        assert!(((a * &x) - b).norm() < 1e-3);
    }

    #[test]
    fn zero_matrix_still_solves() {
        let a = DMatrix::zeros(3, 3);
        let b = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(solve_ridged(&a, &b, 1e-6).is_ok());
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(cholesky_lower(&a).is_err());
    }
}
