//! Symmetric positive-definite matrices with the affine-invariant metric.
//!
//! Points and tangent vectors are `n × n` symmetric matrices. All kernels go
//! through the symmetric eigendecomposition of the base point.

use nalgebra::DMatrix;

use super::linalg::{self, apply, spd_eigen, symmetrize};
use crate::error::Result;

/// Square root and inverse square root of a base point.
pub struct Roots {
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
}

impl Roots {
    pub fn new(p: &DMatrix<f64>) -> Result<Self> {
        let eig = spd_eigen(p)?;
        Ok(Roots {
            sqrt: apply(&eig, f64::sqrt),
            inv_sqrt: apply(&eig, |l| 1.0 / l.sqrt()),
        })
    }

    /// `p^{-1/2} a p^{-1/2}`
    pub fn whiten(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(&self.inv_sqrt * a * &self.inv_sqrt))
    }

    /// `p^{1/2} a p^{1/2}`
    pub fn color(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(&self.sqrt * a * &self.sqrt))
    }
}

pub fn distance(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<f64> {
    let r = Roots::new(p)?;
    let eig = spd_eigen(&r.whiten(q))?;
    Ok(eig.eigenvalues.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt())
}

pub fn exp(p: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = Roots::new(p)?;
    Ok(r.color(&linalg::expm_sym(&r.whiten(v))))
}

pub fn log(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = Roots::new(p)?;
    Ok(r.color(&linalg::logm_spd(&r.whiten(q))?))
}

pub fn inner(p: &DMatrix<f64>, u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    let r = Roots::new(p)?;
    let a = r.whiten(u);
    let b = r.whiten(v);
    Ok(a.dot(&b))
}

/// `v ↦ E v Eᵀ` with `E = (q p^{-1})^{1/2} = p^{1/2} (p^{-1/2} q p^{-1/2})^{1/2} p^{-1/2}`.
pub fn transport(from: &DMatrix<f64>, to: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = Roots::new(from)?;
    let mid = linalg::sqrtm_spd(&r.whiten(to))?;
    let e = &r.sqrt * mid * &r.inv_sqrt;
    Ok(symmetrize(&(&e * v * e.transpose())))
}

/// `p^{-1}`, used for dual basis vectors.
pub fn inverse(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(apply(&spd_eigen(p)?, |l| 1.0 / l))
}
