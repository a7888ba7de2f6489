//! Unit sphere `S^d ⊂ R^{d+1}` with the round metric.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// `⟨p,q⟩ ≤ −1 + CUT_LOCUS_TOL` is treated as antipodal.
pub const CUT_LOCUS_TOL: f64 = 1e-12;

fn angle(p: &DVector<f64>, q: &DVector<f64>) -> (f64, f64, DVector<f64>) {
    let c = p.dot(q).clamp(-1.0, 1.0);
    let u = q - p * c;
    // atan2 keeps small angles accurate where acos(c) loses half the digits.
    let theta = u.norm().atan2(c);
    (c, theta, u)
}

pub fn distance(p: &DVector<f64>, q: &DVector<f64>) -> f64 {
    angle(p, q).1
}

pub fn exp(p: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let nv = v.norm();
    if nv >= PI {
        return Err(Error::Domain(format!(
            "tangent norm {nv} exceeds the injectivity radius π"
        )));
    }
    if nv == 0.0 {
        return Ok(p.clone());
    }
    let out = p * nv.cos() + v * (nv.sin() / nv);
    let norm = out.norm();
    Ok(out / norm)
}

pub fn log(p: &DVector<f64>, q: &DVector<f64>) -> Result<DVector<f64>> {
    let (c, theta, u) = angle(p, q);
    if c <= -1.0 + CUT_LOCUS_TOL {
        return Err(Error::CutLocus("antipodal points have no unique geodesic".into()));
    }
    let nu = u.norm();
    if nu == 0.0 || theta == 0.0 {
        return Ok(DVector::zeros(p.len()));
    }
    // remove the residual normal component left by rounding
    let mut v = u * (theta / nu);
    let normal = v.dot(p);
    v.axpy(-normal, p, 1.0);
    Ok(v)
}

/// Transport along the minimizing geodesic from `from` to `to`.
pub fn transport(from: &DVector<f64>, to: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let u = log(from, to)?;
    let theta = u.norm();
    if theta == 0.0 {
        return Ok(v.clone());
    }
    let dir = u / theta;
    let a = dir.dot(v);
    let mut out = v.clone();
    out.axpy(a * (theta.cos() - 1.0), &dir, 1.0);
    out.axpy(-a * theta.sin(), from, 1.0);
    Ok(out)
}

/// `θ cot θ`, continuous at zero.
pub fn theta_cot_theta(theta: f64) -> f64 {
    if theta.abs() < 1e-8 {
        1.0 - theta * theta / 3.0
    } else {
        theta / theta.tan()
    }
}
