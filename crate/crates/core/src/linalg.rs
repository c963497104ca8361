//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Smallest nonzero eigenvalue of `AᵀA`. An eigenvalue counts as nonzero when it
/// exceeds `1e-10` times the largest one.
pub fn delta_of(a: &DMatrix<f64>) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::Degenerate("empty constraint matrix".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("constraint matrix has non-finite entries".into()));
    }
    let ev = symmetric_eigenvalues(&(a.transpose() * a));
    let largest = ev.last().copied().unwrap_or(0.0);
    if largest <= 0.0 {
        return Err(Error::Degenerate("AᵀA is zero".into()));
    }
    let tol = 1e-10 * largest;
    ev.into_iter()
        .find(|&e| e > tol)
        .ok_or_else(|| Error::Degenerate("no eigenvalue of AᵀA above tolerance".into()))
}

/// Spectral norm `‖A‖₂`.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let ev = symmetric_eigenvalues(&(a.transpose() * a));
    ev.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}
