//! Benchmark processes with known ground truth.
//!
//! Every model is a tangent AR(1) recursion carried in the coordinates of a
//! parallel orthonormal frame `E(t)` along a mean curve `μ(t)`:
//!
//! ```text
//! c_{i+1} = a(t_i) c_i + ε_i(t_i),     X_{i+1} = Exp_{μ(t_{i+1})} Σ_j c_{i+1,j} E_j(t_{i+1})
//! ```
//!
//! with `t_i = i/T`. Because the frame is parallel, transporting the state
//! from `μ(t_i)` to `μ(t_{i+1})` leaves its coordinates unchanged.
//!
//! * `M1(τ)` on `S⁶`: `μ(s)` the quarter great circle from `e_7` to `e_1`,
//!   mean curve `μ(τt)`, `a(t) = 0.05 + 0.5t(1−t)`, innovation
//!   `(1+τ)⁻¹ σ_j(τ,t) Z_j` with `σ_j = (1.1+1.1t)/(1+τ)` for `j ≤ 3`,
//!   `1/(1+τ)` otherwise, `Z_j ~ U(−0.5, 0.5)`.
//! * `M2(τ)` on SPD(3): `μ(s) = 2^s I`, mean curve `μ(τt)`,
//!   `a(t) = 0.05 + 0.25t`, innovation `(1+2τ)⁻¹{6.25(t−0.25)²+0.2} Σ Z_jk E_jk`
//!   with `E_jk` the symmetric unit-entry matrices, `Z_jj ~ N(0,1)`,
//!   `Z_jk ~ N(0,1/4)`.
//! * `M3(τ)` with fixed mean: `a(t) = 0.1 + τ{0.2cos(2πt) + t(1−t)}`,
//!   innovations `U(−0.75, 0.75)⁶` on `S⁶` and in `R⁶`, and the unscaled
//!   `M2` innovation on SPD(3).
//!
//! The recursion starts from the zero state and runs `burn_in` steps with the
//! coefficients at `t = 0` before the first emitted observation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{parallel_frame, Manifold, ManifoldKind, OrthonormalBasis, Point};
use crate::rng;
use crate::series::ManifoldSeries;

/// Sphere states at least this close to the injectivity radius are redrawn.
pub const SPHERE_GUARD: f64 = 1e-6;
pub const MAX_RESAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    M1,
    M2,
    M3Sphere,
    M3Spd,
    EuclideanAr,
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::M1 => "m1",
            Model::M2 => "m2",
            Model::M3Sphere => "m3-sphere",
            Model::M3Spd => "m3-spd",
            Model::EuclideanAr => "euclidean-ar",
        }
    }

    pub fn manifold(&self) -> Manifold {
        match self {
            Model::M1 | Model::M3Sphere => Manifold::sphere(6),
            Model::M2 | Model::M3Spd => Manifold::spd(3),
            Model::EuclideanAr => Manifold::euclidean(6),
        }
    }

    /// Mean at `t = 0`: `e_7`, `I_3` or the origin.
    pub fn base_point(&self) -> Point {
        let m = self.manifold();
        let coords = match self {
            Model::M1 | Model::M3Sphere => {
                let mut c = DVector::zeros(7);
                c[6] = 1.0;
                c
            }
            Model::M2 | Model::M3Spd => DVector::from_column_slice(DMatrix::<f64>::identity(3, 3).as_slice()),
            Model::EuclideanAr => DVector::zeros(6),
        };
        m.point(coords).expect("base point is valid")
    }

    fn coefficient(&self, tau: f64, t: f64) -> f64 {
        match self {
            Model::M1 => 0.05 + 0.5 * t * (1.0 - t),
            Model::M2 => 0.05 + 0.25 * t,
            Model::M3Sphere | Model::M3Spd | Model::EuclideanAr => {
                0.1 + tau * (0.2 * (2.0 * PI * t).cos() + t * (1.0 - t))
            }
        }
    }

    /// Innovation coordinates in the parallel frame.
    fn innovation(&self, tau: f64, t: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
        match self {
            Model::M1 => {
                let outer = 1.0 / (1.0 + tau);
                DVector::from_fn(6, |j, _| {
                    let sigma = if j < 3 { (1.1 + 1.1 * t) / (1.0 + tau) } else { 1.0 / (1.0 + tau) };
                    outer * sigma * rng.random_range(-0.5..0.5)
                })
            }
            Model::M2 => spd_innovation(rng) * ((6.25 * (t - 0.25).powi(2) + 0.2) / (1.0 + 2.0 * tau)),
            Model::M3Spd => spd_innovation(rng),
            Model::M3Sphere | Model::EuclideanAr => DVector::from_fn(6, |_, _| rng.random_range(-0.75..0.75)),
        }
    }

    /// Mean curve `μ_τ(t)`.
    fn mean_at(&self, tau: f64, t: f64) -> Result<Point> {
        let m = self.manifold();
        let s = tau * t;
        match self {
            Model::M1 => {
                let a = s * PI / 2.0;
                let mut c = DVector::zeros(7);
                c[6] = a.cos();
                c[0] = a.sin();
                m.point(c)
            }
            Model::M2 => m.point_from_matrix(&(DMatrix::identity(3, 3) * 2f64.powf(s))),
            _ => Ok(self.base_point()),
        }
    }
}

/// Coordinates of `Σ_{j≤k} Z_jk E_jk` in the orthonormal basis
/// `{E_jj, E_jk/√2}` (upper triangle, row-major).
fn spd_innovation(rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut out = Vec::with_capacity(6);
    for j in 0..3 {
        for k in j..3 {
            let z: f64 = StandardNormal.sample(rng);
            out.push(if j == k { z } else { 0.5 * z * 2f64.sqrt() });
        }
    }
    DVector::from_vec(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub model: Model,
    pub tau: f64,
    pub t: usize,
    pub seed: u64,
    pub burn_in: usize,
}

impl SimSpec {
    pub fn new(model: Model, tau: f64, t: usize, seed: u64) -> Self {
        SimSpec {
            model,
            tau,
            t,
            seed,
            burn_in: 50,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidInput(format!("tau must be a finite nonnegative number, got {}", self.tau)));
        }
        if self.t == 0 {
            return Err(Error::InvalidInput("series length must be positive".into()));
        }
        if matches!(self.model, Model::M1) && self.tau > 1.0 {
            return Err(Error::InvalidInput(format!("M1 needs tau in [0, 1], got {}", self.tau)));
        }
        Ok(())
    }
}

/// A simulated series with its ground truth.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub series: ManifoldSeries,
    /// `μ(t_i)`, `i = 1..T`.
    pub mean_curve: Vec<Point>,
    /// `Log_{μ(t_i)} X_i` in the parallel frame, one column per time point.
    pub coords: DMatrix<f64>,
    /// Innovations redrawn by the sphere excursion guard.
    pub resampled: usize,
}

pub fn simulate(spec: &SimSpec) -> Result<ManifoldSeries> {
    simulate_detailed(spec).map(|s| s.series)
}

pub fn simulate_detailed(spec: &SimSpec) -> Result<Simulation> {
    spec.validate()?;
    let model = spec.model;
    let base = OrthonormalBasis::standard(&model.base_point())?;
    let mut curve = Vec::with_capacity(spec.t);
    let mut frames = Vec::with_capacity(spec.t);
    for i in 1..=spec.t {
        let mu = model.mean_at(spec.tau, i as f64 / spec.t as f64)?;
        // the model curves are geodesics from the base point, so one
        // transport step is exact
        frames.push(base.transported(&mu)?);
        curve.push(mu);
    }
    run(model, spec, curve, frames)
}

pub fn simulate_m1(spec: &SimSpec) -> Result<ManifoldSeries> {
    expect_model(spec, &[Model::M1])?;
    simulate(spec)
}

pub fn simulate_m2(spec: &SimSpec) -> Result<ManifoldSeries> {
    expect_model(spec, &[Model::M2])?;
    simulate(spec)
}

pub fn simulate_m3(spec: &SimSpec) -> Result<ManifoldSeries> {
    expect_model(spec, &[Model::M3Sphere, Model::M3Spd, Model::EuclideanAr])?;
    simulate(spec)
}

fn expect_model(spec: &SimSpec, allowed: &[Model]) -> Result<()> {
    if allowed.contains(&spec.model) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("model {} not accepted here", spec.model.name())))
    }
}

fn run(model: Model, spec: &SimSpec, curve: Vec<Point>, frames: Vec<OrthonormalBasis>) -> Result<Simulation> {
    let m = model.manifold();
    let d = m.intrinsic_dim();
    let guarded = m.kind() == ManifoldKind::Sphere;
    let mut rng = rng::stream(spec.seed, 0);
    let mut state = DVector::zeros(d);
    let mut resampled = 0usize;
    let mut step = |state: &DVector<f64>, t: f64, rng: &mut ChaCha8Rng| -> Result<DVector<f64>> {
        let a = model.coefficient(spec.tau, t);
        for _ in 0..=MAX_RESAMPLES {
            let next = state * a + model.innovation(spec.tau, t, rng);
            if !guarded || next.norm() < PI - SPHERE_GUARD {
                return Ok(next);
            }
            resampled += 1;
        }
        Err(Error::Domain(format!(
            "tangent state left the injectivity radius {MAX_RESAMPLES} times in a row at t = {t}"
        )))
    };
    for _ in 0..spec.burn_in {
        state = step(&state, 0.0, &mut rng)?;
    }
    let mut coords = DMatrix::zeros(d, spec.t);
    let mut points = Vec::with_capacity(spec.t);
    for i in 0..spec.t {
        state = step(&state, i as f64 / spec.t as f64, &mut rng)?;
        let v = frames[i].ambient_of_coords(&state);
        let x = m.exp_raw(curve[i].coords(), &v).map_err(|e| e.at(i + 1))?;
        let x = m
            .point(x)
            .map_err(|e| Error::Domain(format!("simulated observation {} is invalid: {e}", i + 1)))?;
        coords.set_column(i, &state);
        points.push(x);
    }
    if resampled > 0 {
        log::info!("{resampled} innovations redrawn by the excursion guard");
    }
    Ok(Simulation {
        series: ManifoldSeries::new(m, points)?,
        mean_curve: curve,
        coords,
        resampled,
    })
}

/// One term `cos(2πkt)·c + sin(2πkt)·s` of a tangent-valued Fourier series;
/// coefficients are coordinates in the standard basis at the base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub k: u32,
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

/// Perturbation direction `b(t)` of a local alternative.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FourierCurve {
    pub terms: Vec<FourierTerm>,
}

impl FourierCurve {
    pub fn zero() -> Self {
        FourierCurve::default()
    }

    /// `b(t) = cos(2πkt)·c` along coordinate direction `axis`.
    pub fn single_cosine(d: usize, axis: usize, k: u32, amplitude: f64) -> Self {
        let mut cos = vec![0.0; d];
        cos[axis] = amplitude;
        FourierCurve {
            terms: vec![FourierTerm { k, cos, sin: Vec::new() }],
        }
    }

    pub fn eval(&self, t: f64, d: usize) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(d);
        for term in &self.terms {
            let arg = 2.0 * PI * term.k as f64 * t;
            for (coef, w) in [(&term.cos, arg.cos()), (&term.sin, arg.sin())] {
                if coef.is_empty() {
                    continue;
                }
                if coef.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: coef.len(),
                    });
                }
                out.axpy(w, &DVector::from_column_slice(coef), 1.0);
            }
        }
        Ok(out)
    }
}

/// `μ_T(t) = Exp_μ(τ(T) b(t))` with `τ(T) = rate·T^{-1/2}` and `μ` the base
/// point of `base.model`; the tangent dynamics are those of `base.model` at
/// `τ = 0`, attached through the parallel frame along the discretized mean
/// curve.
pub fn simulate_local_alternative(base: &SimSpec, b: &FourierCurve, rate: f64) -> Result<ManifoldSeries> {
    simulate_local_alternative_detailed(base, b, rate).map(|s| s.series)
}

pub fn simulate_local_alternative_detailed(base: &SimSpec, b: &FourierCurve, rate: f64) -> Result<Simulation> {
    let spec = SimSpec { tau: 0.0, ..*base };
    spec.validate()?;
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::InvalidInput(format!("rate must be finite and nonnegative, got {rate}")));
    }
    let model = spec.model;
    let m = model.manifold();
    let mu = model.base_point();
    let basis = OrthonormalBasis::standard(&mu)?;
    let scale = rate / (spec.t as f64).sqrt();
    let point_at = |t: f64| -> Result<Point> {
        let v = basis.ambient_of_coords(&(b.eval(t, basis.dim())? * scale));
        m.point(m.exp_raw(mu.coords(), &v)?)
    };
    let mut curve = Vec::with_capacity(spec.t + 1);
    for i in 0..=spec.t {
        curve.push(point_at(i as f64 / spec.t as f64)?);
    }
    let mut frames = parallel_frame(&curve, &basis.transported(&curve[0])?)?;
    frames.remove(0);
    curve.remove(0);
    run(model, &spec, curve, frames)
}
