//! Symmetric matrix functions via eigendecomposition.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest eigenvalue ratio accepted for SPD inputs.
pub const MAX_CONDITION: f64 = 1e12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

/// `Q f(Λ) Qᵀ` for a symmetric eigendecomposition.
pub fn apply(eig: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let fl = f(*lambda);
        scaled.column_mut(j).scale_mut(fl);
    }
    symmetrize(&(scaled * q.transpose()))
}

/// Eigendecomposition of a matrix that must be SPD and reasonably conditioned.
pub fn spd_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let eig = eigen(m);
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if !(min > 0.0) || !min.is_finite() || !max.is_finite() {
        return Err(Error::InvalidInput(format!(
            "matrix is not positive definite (min eigenvalue {min:e})"
        )));
    }
    if max / min > MAX_CONDITION {
        return Err(Error::IllConditioned(format!(
            "eigenvalue ratio {:e} exceeds {MAX_CONDITION:e}",
            max / min
        )));
    }
    Ok(eig)
}

pub fn expm_sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    apply(&eigen(m), f64::exp)
}

pub fn logm_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(apply(&spd_eigen(m)?, f64::ln))
}

pub fn sqrtm_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(apply(&spd_eigen(m)?, f64::sqrt))
}

/// Inverse of a symmetric matrix, refusing when the smallest eigenvalue is
/// below `min_eig`.
pub fn sym_inverse(m: &DMatrix<f64>, min_eig: f64) -> Result<(DMatrix<f64>, f64, f64)> {
    let eig = eigen(m);
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if !(min >= min_eig) {
        return Err(Error::Degenerate(format!(
            "smallest eigenvalue {min:e} below {min_eig:e}"
        )));
    }
    Ok((apply(&eig, |l| 1.0 / l), min, max))
}
