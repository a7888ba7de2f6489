//! Stationarity tests for time series on Riemannian manifolds.
//!
//! * [`geometry`]: distance, exponential/logarithm maps, parallel transport
//!   and the Hessian of the half-squared distance on spheres, SPD matrices
//!   (affine-invariant metric) and Euclidean space.
//! * [`frechet`]: intrinsic mean by Karcher iteration.
//! * [`first_order`]: CUSUM test for a constant intrinsic mean, calibrated by
//!   the curvature adjusted multiplier bootstrap, plus two baselines.
//! * [`second_order`]: local-periodogram test for a time-invariant spectral
//!   density of the tangent-coordinate process.
//! * [`simulate`]: generators for the benchmark processes.

// `!(x > 0.0)` is how NaN gets rejected along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod first_order;
pub mod frechet;
pub mod geometry;
pub mod par;
pub mod rng;
pub mod second_order;
pub mod series;
pub mod simulate;

pub use error::{Error, Result};
pub use geometry::{Manifold, ManifoldKind, OrthonormalBasis, Point, SelfAdjointOperator, TangentVector};
pub use par::Execution;
pub use series::ManifoldSeries;
