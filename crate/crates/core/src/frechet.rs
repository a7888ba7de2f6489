//! Intrinsic (Fréchet) mean by Karcher iteration:
//! `μ_{k+1} = Exp_{μ_k}(step · mean_i Log_{μ_k} X_i)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ManifoldKind, Point};
use crate::par::{try_map_indexed, Execution};
use crate::series::{ambient_average, ManifoldSeries};

/// Data must satisfy `d(X_i, X_j) < π − HEMISPHERE_MARGIN` on the sphere.
pub const HEMISPHERE_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum FrechetInit {
    FirstPoint,
    ExtrinsicProjection,
    UserSupplied(Point),
}

#[derive(Debug, Clone)]
pub struct FrechetConfig {
    pub max_iter: usize,
    /// Threshold on the Riemannian norm of the mean log vector.
    pub tol: f64,
    pub step: f64,
    pub init: FrechetInit,
    pub exec: Execution,
}

impl Default for FrechetConfig {
    fn default() -> Self {
        FrechetConfig {
            max_iter: 200,
            tol: 1e-9,
            step: 1.0,
            init: FrechetInit::ExtrinsicProjection,
            exec: Execution::Sequential,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetDiagnostics {
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

pub fn frechet_mean(series: &ManifoldSeries, cfg: &FrechetConfig) -> Result<(Point, FrechetDiagnostics)> {
    frechet_mean_of(series.points(), cfg)
}

/// Sum of squared distances from `p` to the sample.
pub fn frechet_objective(series: &ManifoldSeries, p: &Point) -> Result<f64> {
    let m = series.manifold();
    let mut acc = 0.0;
    for x in series.points() {
        acc += m.distance_raw(p.coords(), x.coords())?.powi(2);
    }
    Ok(acc)
}

pub(crate) fn frechet_mean_of(points: &[Point], cfg: &FrechetConfig) -> Result<(Point, FrechetDiagnostics)> {
    if !(cfg.tol > 0.0) || !(cfg.step > 0.0 && cfg.step <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "need tol > 0 and 0 < step ≤ 1, got tol={} step={}",
            cfg.tol, cfg.step
        )));
    }
    let Some(first) = points.first() else {
        return Err(Error::InvalidInput("empty sample".into()));
    };
    let m = first.manifold();
    if points.iter().any(|p| p.manifold() != m) {
        return Err(Error::InvalidInput("points lie on different manifolds".into()));
    }
    if m.kind() == ManifoldKind::Sphere {
        check_hemisphere(points)?;
    }
    if m.kind() == ManifoldKind::Euclidean {
        return Ok((
            Point::from_raw(m, ambient_average(points.iter().map(|p| p.coords()), m.ambient_dim())),
            FrechetDiagnostics {
                iterations: 0,
                grad_norm: 0.0,
                converged: true,
            },
        ));
    }

    let mut mu = match &cfg.init {
        FrechetInit::FirstPoint => first.clone(),
        FrechetInit::UserSupplied(p) => {
            if p.manifold() != m {
                return Err(Error::InvalidInput("initial point on a different manifold".into()));
            }
            p.clone()
        }
        FrechetInit::ExtrinsicProjection => {
            let avg = ambient_average(points.iter().map(|p| p.coords()), m.ambient_dim());
            match m.kind() {
                ManifoldKind::Sphere => m.normalized_point(&avg).unwrap_or_else(|_| first.clone()),
                _ => Point::from_raw(m, avg),
            }
        }
    };

    let t = points.len() as f64;
    let mut grad_norm = f64::INFINITY;
    for iter in 0..=cfg.max_iter {
        let logs = try_map_indexed(points.len(), cfg.exec, |i| {
            m.log_raw(mu.coords(), points[i].coords()).map_err(|e| e.at(i + 1))
        })?;
        let mut grad = DVector::zeros(m.ambient_dim());
        for v in &logs {
            grad += v;
        }
        grad /= t;
        grad_norm = m.inner_raw(mu.coords(), &grad, &grad)?.sqrt();
        if grad_norm <= cfg.tol {
            return Ok((
                mu,
                FrechetDiagnostics {
                    iterations: iter,
                    grad_norm,
                    converged: true,
                },
            ));
        }
        if iter == cfg.max_iter {
            break;
        }
        mu = Point::from_raw(m, m.exp_raw(mu.coords(), &(grad * cfg.step))?);
    }
    log::debug!("Fréchet mean did not converge: gradient norm {grad_norm:e}");
    Ok((
        mu,
        FrechetDiagnostics {
            iterations: cfg.max_iter,
            grad_norm,
            converged: false,
        },
    ))
}

fn check_hemisphere(points: &[Point]) -> Result<()> {
    let min_cos = (std::f64::consts::PI - HEMISPHERE_MARGIN).cos();
    for (i, p) in points.iter().enumerate() {
        for (j, q) in points.iter().enumerate().skip(i + 1) {
            if p.coords().dot(q.coords()) <= min_cos {
                return Err(Error::Hemisphere(format!(
                    "observations {} and {} are (nearly) antipodal",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}
