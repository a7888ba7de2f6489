use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{Manifold, OrthonormalBasis, Point};
use crate::par::{try_map_indexed, Execution};

/// Ordered observations `X_1, …, X_T` on one manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSeries {
    manifold: Manifold,
    points: Vec<Point>,
}

impl ManifoldSeries {
    pub fn new(manifold: Manifold, points: Vec<Point>) -> Result<Self> {
        if let Some((i, _)) = points.iter().enumerate().find(|(_, p)| p.manifold() != manifold) {
            return Err(Error::InvalidInput(format!(
                "point {} lies on a different manifold",
                i + 1
            )));
        }
        Ok(ManifoldSeries { manifold, points })
    }

    /// Validates each row of ambient coordinates; errors name the 1-based row.
    pub fn from_coords(manifold: Manifold, rows: Vec<DVector<f64>>) -> Result<Self> {
        let points = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| manifold.point(r).map_err(|e| e.at(i + 1)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ManifoldSeries { manifold, points })
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        ManifoldSeries {
            manifold: self.manifold,
            points,
        }
    }

    /// Coordinates of `Log_base X_i` in `basis`, one column per time point.
    /// Errors carry the 1-based index of the offending observation.
    pub fn log_coords(&self, basis: &OrthonormalBasis, exec: Execution) -> Result<DMatrix<f64>> {
        let base = basis.base();
        if base.manifold() != self.manifold {
            return Err(Error::InvalidInput("basis lives on a different manifold".into()));
        }
        let cols = try_map_indexed(self.len(), exec, |i| {
            self.manifold
                .log_raw(base.coords(), self.points[i].coords())
                .map(|v| basis.coords_of_ambient(&v))
                .map_err(|e| e.at(i + 1))
        })?;
        Ok(DMatrix::from_columns(&cols))
    }

    /// Average of ambient coordinates, see [`ambient_average`].
    pub fn ambient_mean(&self) -> DVector<f64> {
        ambient_average(self.points.iter().map(|p| p.coords()), self.manifold.ambient_dim())
    }
}

/// `x_1 + mean_i (x_i − x_1)`: equal to the plain average, but exact for a
/// constant sample.
pub fn ambient_average<'a>(mut xs: impl Iterator<Item = &'a DVector<f64>>, dim: usize) -> DVector<f64> {
    let Some(first) = xs.next() else {
        return DVector::zeros(dim);
    };
    let mut acc = DVector::zeros(dim);
    let mut count = 1usize;
    for x in xs {
        acc += x - first;
        count += 1;
    }
    first + acc / count as f64
}
