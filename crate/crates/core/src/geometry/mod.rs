//! Riemannian kernels for the three supported manifolds.
//!
//! Points and tangent vectors are stored in their ambient representation:
//!
//! | kind        | point                         | tangent vector                    |
//! |-------------|-------------------------------|-----------------------------------|
//! | `Sphere`    | unit vector in `R^{d+1}`      | ambient vector orthogonal to base |
//! | `Spd`       | `n × n` SPD matrix (col-major)| `n × n` symmetric matrix          |
//! | `Euclidean` | vector in `R^d`               | vector in `R^d`                   |
//!
//! Statistics code works with coordinates in an [`OrthonormalBasis`], which
//! makes every Riemannian norm a plain Euclidean norm of the coordinates.

pub mod linalg;
pub mod spd;
pub mod sphere;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for membership checks on points and tangent vectors.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Sphere,
    Spd,
    Euclidean,
}

/// Manifold descriptor. `size` is the vector length for `Sphere`/`Euclidean`
/// and the matrix side for `Spd`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Manifold {
    kind: ManifoldKind,
    size: usize,
}

impl Manifold {
    /// `S^d`, embedded in `R^{d+1}`.
    pub fn sphere(d: usize) -> Self {
        assert!(d >= 1, "sphere dimension must be positive");
        Manifold {
            kind: ManifoldKind::Sphere,
            size: d + 1,
        }
    }

    /// `n × n` SPD matrices, intrinsic dimension `n(n+1)/2`.
    pub fn spd(n: usize) -> Self {
        assert!(n >= 1, "matrix size must be positive");
        Manifold {
            kind: ManifoldKind::Spd,
            size: n,
        }
    }

    pub fn euclidean(d: usize) -> Self {
        assert!(d >= 1, "dimension must be positive");
        Manifold {
            kind: ManifoldKind::Euclidean,
            size: d,
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Sphere => self.size - 1,
            ManifoldKind::Spd => self.size * (self.size + 1) / 2,
            ManifoldKind::Euclidean => self.size,
        }
    }

    /// Length of the flattened ambient representation.
    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Spd => self.size * self.size,
            _ => self.size,
        }
    }

    /// Matrix side for SPD manifolds.
    pub fn matrix_size(&self) -> Option<usize> {
        (self.kind == ManifoldKind::Spd).then_some(self.size)
    }

    /// Validates ambient coordinates and wraps them as a point.
    pub fn point(&self, coords: DVector<f64>) -> Result<Point> {
        if coords.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim(),
                got: coords.len(),
            });
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        match self.kind {
            ManifoldKind::Sphere => {
                let norm = coords.norm();
                if (norm - 1.0).abs() > MEMBERSHIP_TOL {
                    return Err(Error::InvalidInput(format!(
                        "sphere point has norm {norm}, expected 1"
                    )));
                }
            }
            ManifoldKind::Spd => {
                let m = DMatrix::from_column_slice(self.size, self.size, coords.as_slice());
                if !linalg::is_symmetric(&m, MEMBERSHIP_TOL) {
                    return Err(Error::InvalidInput("matrix is not symmetric".into()));
                }
                let min = linalg::eigen(&m).eigenvalues.min();
                if !(min > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not positive definite (min eigenvalue {min:e})"
                    )));
                }
            }
            ManifoldKind::Euclidean => {}
        }
        Ok(Point {
            manifold: *self,
            coords,
        })
    }

    /// SPD point from a matrix.
    pub fn point_from_matrix(&self, m: &DMatrix<f64>) -> Result<Point> {
        if self.kind != ManifoldKind::Spd {
            return Err(Error::InvalidInput("matrix points require an SPD manifold".into()));
        }
        self.point(DVector::from_column_slice(m.as_slice()))
    }

    /// Unit-norm point built by normalizing `v` (sphere only).
    pub fn normalized_point(&self, v: &DVector<f64>) -> Result<Point> {
        let n = v.norm();
        if self.kind != ManifoldKind::Sphere || n == 0.0 {
            return Err(Error::InvalidInput("cannot normalize onto this manifold".into()));
        }
        self.point(v / n)
    }

    fn mat(&self, v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.size, self.size, v.as_slice())
    }

    fn flat(m: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_column_slice(m.as_slice())
    }

    // Raw kernels on ambient coordinates. No membership validation.

    pub fn distance_raw(&self, p: &DVector<f64>, q: &DVector<f64>) -> Result<f64> {
        match self.kind {
            ManifoldKind::Sphere => Ok(sphere::distance(p, q)),
            ManifoldKind::Spd => spd::distance(&self.mat(p), &self.mat(q)),
            ManifoldKind::Euclidean => Ok((p - q).norm()),
        }
    }

    pub fn exp_raw(&self, p: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        match self.kind {
            ManifoldKind::Sphere => sphere::exp(p, v),
            ManifoldKind::Spd if v.iter().all(|&x| x == 0.0) => Ok(p.clone()),
            ManifoldKind::Spd => Ok(Self::flat(&spd::exp(&self.mat(p), &self.mat(v))?)),
            ManifoldKind::Euclidean => Ok(p + v),
        }
    }

    pub fn log_raw(&self, p: &DVector<f64>, q: &DVector<f64>) -> Result<DVector<f64>> {
        match self.kind {
            ManifoldKind::Sphere => sphere::log(p, q),
            ManifoldKind::Spd => Ok(Self::flat(&spd::log(&self.mat(p), &self.mat(q))?)),
            ManifoldKind::Euclidean => Ok(q - p),
        }
    }

    pub fn transport_raw(
        &self,
        from: &DVector<f64>,
        to: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        match self.kind {
            ManifoldKind::Sphere => sphere::transport(from, to, v),
            ManifoldKind::Spd if from == to => Ok(v.clone()),
            ManifoldKind::Spd => Ok(Self::flat(&spd::transport(
                &self.mat(from),
                &self.mat(to),
                &self.mat(v),
            )?)),
            ManifoldKind::Euclidean => Ok(v.clone()),
        }
    }

    pub fn inner_raw(&self, p: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        match self.kind {
            ManifoldKind::Spd => spd::inner(&self.mat(p), &self.mat(u), &self.mat(v)),
            _ => Ok(u.dot(v)),
        }
    }
}

/// A validated point on a manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    manifold: Manifold,
    coords: DVector<f64>,
}

impl Point {
    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    /// Matrix form of an SPD point.
    pub fn matrix(&self) -> Option<DMatrix<f64>> {
        self.manifold.matrix_size().map(|_| self.manifold.mat(&self.coords))
    }

    pub(crate) fn from_raw(manifold: Manifold, coords: DVector<f64>) -> Self {
        Point { manifold, coords }
    }
}

/// Tangent vector in ambient representation, attached to its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: Point,
    ambient: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: &Point, ambient: DVector<f64>) -> Result<Self> {
        let m = base.manifold;
        if ambient.len() != m.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: m.ambient_dim(),
                got: ambient.len(),
            });
        }
        match m.kind {
            ManifoldKind::Sphere => {
                let normal = ambient.dot(&base.coords);
                if normal.abs() > MEMBERSHIP_TOL * ambient.norm().max(1.0) {
                    return Err(Error::InvalidInput(format!(
                        "vector is not tangent (normal component {normal:e})"
                    )));
                }
            }
            ManifoldKind::Spd => {
                if !linalg::is_symmetric(&m.mat(&ambient), MEMBERSHIP_TOL) {
                    return Err(Error::InvalidInput("tangent matrix is not symmetric".into()));
                }
            }
            ManifoldKind::Euclidean => {}
        }
        Ok(TangentVector {
            base: base.clone(),
            ambient,
        })
    }

    pub fn zero(base: &Point) -> Self {
        TangentVector {
            base: base.clone(),
            ambient: DVector::zeros(base.manifold.ambient_dim()),
        }
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn ambient(&self) -> &DVector<f64> {
        &self.ambient
    }

    pub fn scaled(&self, s: f64) -> Self {
        TangentVector {
            base: self.base.clone(),
            ambient: &self.ambient * s,
        }
    }

    /// Riemannian norm at the base point.
    pub fn norm(&self) -> f64 {
        metric_inner(self, self).map(f64::sqrt).unwrap_or(f64::NAN)
    }

    pub(crate) fn from_raw(base: Point, ambient: DVector<f64>) -> Self {
        TangentVector { base, ambient }
    }
}

fn same_manifold(a: &Point, b: &Point) -> Result<()> {
    if a.manifold != b.manifold {
        return Err(Error::InvalidInput(format!(
            "manifold mismatch: {:?} vs {:?}",
            a.manifold, b.manifold
        )));
    }
    Ok(())
}

fn same_base(a: &Point, b: &Point) -> Result<()> {
    same_manifold(a, b)?;
    let scale = a.coords.amax().max(1.0);
    if (&a.coords - &b.coords).amax() > MEMBERSHIP_TOL * scale {
        return Err(Error::InvalidInput("tangent vectors have different base points".into()));
    }
    Ok(())
}

pub fn distance(p: &Point, q: &Point) -> Result<f64> {
    same_manifold(p, q)?;
    p.manifold.distance_raw(&p.coords, &q.coords)
}

pub fn exp_map(p: &Point, v: &TangentVector) -> Result<Point> {
    same_base(p, &v.base)?;
    let out = p.manifold.exp_raw(&p.coords, &v.ambient)?;
    Ok(Point::from_raw(p.manifold, out))
}

pub fn log_map(p: &Point, q: &Point) -> Result<TangentVector> {
    same_manifold(p, q)?;
    let v = p.manifold.log_raw(&p.coords, &q.coords)?;
    Ok(TangentVector::from_raw(p.clone(), v))
}

/// Transports `v` from `from` to `to` along the minimizing geodesic.
pub fn parallel_transport(v: &TangentVector, from: &Point, to: &Point) -> Result<TangentVector> {
    same_base(from, &v.base)?;
    same_manifold(from, to)?;
    let out = from.manifold.transport_raw(&from.coords, &to.coords, &v.ambient)?;
    Ok(TangentVector::from_raw(to.clone(), out))
}

pub fn metric_inner(u: &TangentVector, v: &TangentVector) -> Result<f64> {
    same_base(&u.base, &v.base)?;
    u.base.manifold.inner_raw(&u.base.coords, &u.ambient, &v.ambient)
}

/// Hermitian inner product of complex coordinate vectors in an orthonormal
/// basis, conjugate-linear in the second argument.
pub fn hermitian_inner(a: &DVector<Complex<f64>>, b: &DVector<Complex<f64>>) -> Complex<f64> {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

/// Orthonormal basis of a tangent space.
///
/// Along with the basis vectors it keeps the dual vectors `D_j` such that the
/// `j`-th coordinate of an ambient tangent vector `v` is `D_j · v`.
#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    base: Point,
    vectors: Vec<DVector<f64>>,
    duals: Vec<DVector<f64>>,
}

impl OrthonormalBasis {
    /// Canonical basis at `base`:
    /// * sphere: Gram–Schmidt on the standard vectors, skipping the axis most
    ///   aligned with `base` (at the north pole `e_{d+1}` this gives `e_1..e_d`);
    /// * SPD: `p^{1/2} B p^{1/2}` for `B` the orthonormal basis of symmetric
    ///   matrices `E_jj`, `(E_jk + E_kj)/√2`, upper triangle in row-major order;
    /// * Euclidean: standard basis.
    pub fn standard(base: &Point) -> Result<Self> {
        let m = base.manifold;
        let vectors = match m.kind {
            ManifoldKind::Euclidean => (0..m.size)
                .map(|i| {
                    let mut e = DVector::zeros(m.size);
                    e[i] = 1.0;
                    e
                })
                .collect(),
            ManifoldKind::Sphere => {
                let p = &base.coords;
                let skip = p.iamax();
                let mut out: Vec<DVector<f64>> = Vec::with_capacity(m.size - 1);
                for i in (0..m.size).filter(|&i| i != skip) {
                    let mut e = DVector::zeros(m.size);
                    e[i] = 1.0;
                    // two passes of modified Gram–Schmidt
                    for _ in 0..2 {
                        let a = e.dot(p);
                        e.axpy(-a, p, 1.0);
                        for prev in &out {
                            let a = e.dot(prev);
                            e.axpy(-a, prev, 1.0);
                        }
                    }
                    let n = e.norm();
                    out.push(e / n);
                }
                out
            }
            ManifoldKind::Spd => {
                let n = m.size;
                let roots = spd::Roots::new(&m.mat(&base.coords))?;
                let mut out = Vec::with_capacity(m.intrinsic_dim());
                for j in 0..n {
                    for k in j..n {
                        let mut b = DMatrix::zeros(n, n);
                        if j == k {
                            b[(j, j)] = 1.0;
                        } else {
                            let s = std::f64::consts::FRAC_1_SQRT_2;
                            b[(j, k)] = s;
                            b[(k, j)] = s;
                        }
                        out.push(Manifold::flat(&roots.color(&b)));
                    }
                }
                out
            }
        };
        Self::with_vectors(base.clone(), vectors)
    }

    /// Wraps caller-supplied vectors after checking orthonormality.
    pub fn from_vectors(base: &Point, vectors: Vec<TangentVector>) -> Result<Self> {
        let d = base.manifold.intrinsic_dim();
        if vectors.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: vectors.len(),
            });
        }
        for v in &vectors {
            same_base(base, &v.base)?;
        }
        let basis = Self::with_vectors(base.clone(), vectors.into_iter().map(|v| v.ambient).collect())?;
        let gram = basis.gram()?;
        let err = (gram - DMatrix::identity(d, d)).amax();
        if err > MEMBERSHIP_TOL {
            return Err(Error::InvalidInput(format!(
                "basis is not orthonormal (Gram deviation {err:e})"
            )));
        }
        Ok(basis)
    }

    fn with_vectors(base: Point, vectors: Vec<DVector<f64>>) -> Result<Self> {
        let m = base.manifold;
        let duals = match m.kind {
            ManifoldKind::Spd => {
                let inv = spd::inverse(&m.mat(&base.coords))?;
                vectors
                    .iter()
                    .map(|v| Manifold::flat(&(&inv * m.mat(v) * &inv)))
                    .collect()
            }
            _ => vectors.clone(),
        };
        Ok(OrthonormalBasis {
            base,
            vectors,
            duals,
        })
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> Vec<TangentVector> {
        self.vectors
            .iter()
            .map(|v| TangentVector::from_raw(self.base.clone(), v.clone()))
            .collect()
    }

    pub fn vector(&self, j: usize) -> TangentVector {
        TangentVector::from_raw(self.base.clone(), self.vectors[j].clone())
    }

    /// Coordinates of an ambient tangent vector at the basis' base point.
    pub fn coords_of_ambient(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.duals.len(), self.duals.iter().map(|d| d.dot(v)))
    }

    pub fn coords(&self, v: &TangentVector) -> Result<DVector<f64>> {
        same_base(&self.base, &v.base)?;
        Ok(self.coords_of_ambient(&v.ambient))
    }

    pub fn ambient_of_coords(&self, c: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.base.manifold.ambient_dim());
        for (cj, e) in c.iter().zip(&self.vectors) {
            out.axpy(*cj, e, 1.0);
        }
        out
    }

    pub fn vector_from_coords(&self, c: &DVector<f64>) -> TangentVector {
        TangentVector::from_raw(self.base.clone(), self.ambient_of_coords(c))
    }

    /// Basis `E'_j = Σ_k q_kj E_k` for an orthogonal matrix `q`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Result<Self> {
        let d = self.dim();
        if q.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: q.nrows(),
            });
        }
        let vectors = (0..d)
            .map(|j| {
                let mut out = DVector::zeros(self.base.manifold.ambient_dim());
                for k in 0..d {
                    out.axpy(q[(k, j)], &self.vectors[k], 1.0);
                }
                TangentVector::from_raw(self.base.clone(), out)
            })
            .collect();
        Self::from_vectors(&self.base, vectors)
    }

    pub fn gram(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let m = self.base.manifold;
        let mut g = DMatrix::zeros(d, d);
        for j in 0..d {
            for k in 0..d {
                g[(j, k)] = m.inner_raw(&self.base.coords, &self.vectors[j], &self.vectors[k])?;
            }
        }
        Ok(g)
    }

    /// Transports every basis vector to `to` along the connecting geodesic.
    pub fn transported(&self, to: &Point) -> Result<Self> {
        same_manifold(&self.base, to)?;
        let m = self.base.manifold;
        let vectors = self
            .vectors
            .iter()
            .map(|v| m.transport_raw(&self.base.coords, &to.coords, v))
            .collect::<Result<Vec<_>>>()?;
        Self::with_vectors(to.clone(), vectors)
    }
}

/// Parallel orthonormal frame along a discretized curve: the basis at step
/// `k + 1` is the transport of the basis at step `k` along the connecting
/// geodesic.
pub fn parallel_frame(curve: &[Point], initial: &OrthonormalBasis) -> Result<Vec<OrthonormalBasis>> {
    let Some(first) = curve.first() else {
        return Ok(Vec::new());
    };
    same_base(first, &initial.base)?;
    let mut frames = Vec::with_capacity(curve.len());
    frames.push(initial.clone());
    for (k, next) in curve.iter().enumerate().skip(1) {
        let f = frames[k - 1].transported(next).map_err(|e| e.at(k))?;
        frames.push(f);
    }
    Ok(frames)
}

/// Self-adjoint operator on a tangent space, as a symmetric matrix in an
/// orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfAdjointOperator {
    pub base: Point,
    pub matrix: DMatrix<f64>,
}

impl SelfAdjointOperator {
    pub fn apply(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.matrix * c
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        linalg::eigen(&self.matrix).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().min()
    }
}

/// Riemannian Hessian of `f_x = d²(·, x)/2` at `p`, in `basis`.
///
/// * Euclidean: the identity.
/// * Sphere: eigenvalue 1 along `Log_p x` and `θ cot θ` on its orthogonal
///   complement, `θ = d(p, x)`.
/// * SPD: central finite differences of the gradient field `−Log_z x`,
///   see [`hessian_finite_difference`].
pub fn hessian(p: &Point, x: &Point, basis: &OrthonormalBasis) -> Result<SelfAdjointOperator> {
    same_manifold(p, x)?;
    same_base(p, &basis.base)?;
    let d = basis.dim();
    let matrix = match p.manifold.kind {
        ManifoldKind::Euclidean => DMatrix::identity(d, d),
        ManifoldKind::Sphere => {
            let v = p.manifold.log_raw(&p.coords, &x.coords)?;
            let c = basis.coords_of_ambient(&v);
            let theta = c.norm();
            if theta == 0.0 {
                DMatrix::identity(d, d)
            } else {
                let k = sphere::theta_cot_theta(theta);
                let u = c / theta;
                DMatrix::identity(d, d) * k + (&u * u.transpose()) * (1.0 - k)
            }
        }
        ManifoldKind::Spd => {
            let dist = p.manifold.distance_raw(&p.coords, &x.coords)?;
            let h = 1e-4 * dist.max(1.0);
            hessian_finite_difference(p, x, basis, h)?
        }
    };
    Ok(SelfAdjointOperator {
        base: p.clone(),
        matrix,
    })
}

/// Hessian of `d²(·, x)/2` at `p` by central differences of the Riemannian
/// gradient `g(z) = −Log_z x` at `z = Exp_p(±h E_j)`, each gradient transported
/// back to `p` before differencing. The result is symmetrized.
pub fn hessian_finite_difference(
    p: &Point,
    x: &Point,
    basis: &OrthonormalBasis,
    h: f64,
) -> Result<DMatrix<f64>> {
    let m = p.manifold;
    let d = basis.dim();
    let grad_at_p = |dir: &DVector<f64>| -> Result<DVector<f64>> {
        let z = m.exp_raw(&p.coords, dir)?;
        let g = -m.log_raw(&z, &x.coords)?;
        m.transport_raw(&z, &p.coords, &g)
    };
    let mut out = DMatrix::zeros(d, d);
    for j in 0..d {
        let e = &basis.vectors[j] * h;
        let plus = grad_at_p(&e)?;
        let minus = grad_at_p(&(-e))?;
        let col = basis.coords_of_ambient(&((plus - minus) / (2.0 * h)));
        out.set_column(j, &col);
    }
    Ok(linalg::symmetrize(&out))
}
