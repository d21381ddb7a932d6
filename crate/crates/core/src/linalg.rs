//! Dense symmetric helpers shared by the update, valuation and mechanism code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// A symmetric matrix is treated as singular when `λ_min ≤ SINGULAR_RTOL · λ_max`.
pub const SINGULAR_RTOL: f64 = 1e-12;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let mut s = m.clone();
    symmetrize(&mut s);
    SymmetricEigen::new(s)
}

/// Smallest-to-largest eigenvalue ratio of a symmetric matrix.
pub fn eigen_ratio(m: &DMatrix<f64>) -> f64 {
    let eig = eigen(m);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if max <= 0.0 {
        return if max == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    min / max
}

/// Inverse of a symmetric positive definite matrix through its eigendecomposition.
/// The result is symmetrized.
pub fn sym_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    let eig = eigen(m);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= SINGULAR_RTOL * max {
        return Err(Error::Singular {
            what,
            ratio: if max > 0.0 { min / max } else { 0.0 },
        });
    }
    let inv_vals = eig.eigenvalues.map(|l| 1.0 / l);
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&inv_vals) * q.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// Symmetric square root of a positive semidefinite matrix.
pub fn sym_sqrt(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let eig = eigen(m);
    let max = eig.eigenvalues.max();
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * max.abs()) {
        return Err(Error::InvalidCovariance(format!("{what} has a negative eigenvalue")));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&roots) * q.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// `(A + c·uuᵀ)⁻¹` from `A⁻¹` by the Sherman–Morrison identity.
pub fn sherman_morrison(a_inv: &DMatrix<f64>, u: &DVector<f64>, c: f64) -> DMatrix<f64> {
    let au = a_inv * u;
    let denom = 1.0 + c * u.dot(&au);
    let mut out = a_inv - (c / denom) * &au * au.transpose();
    symmetrize(&mut out);
    out
}

/// Quadratic form `xᵀ M x`.
pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    debug_assert_eq!(m.ncols(), x.len());
    let mut total = 0.0;
    for (b, col) in m.column_iter().enumerate() {
        total += x[b] * col.dot(x);
    }
    total
}

pub fn unit(x: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    let norm = x.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateDirection(format!(
            "{context} must be a finite nonzero vector"
        )));
    }
    Ok(x / norm)
}
