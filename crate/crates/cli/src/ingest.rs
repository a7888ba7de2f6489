//! CSV datasets.
//!
//! One row per time point after a header row. Sphere and Euclidean files hold
//! the ambient coordinates; SPD files hold the row-major upper triangle of each
//! matrix, so an `n × n` series has `n(n+1)/2` columns. The kind and width come
//! from flags or from a sidecar `<file>.manifest.toml`, flags winning.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use mstat_core::{Manifold, ManifoldKind, ManifoldSeries};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Sphere rows further than this from unit norm are rejected, closer ones
/// renormalized.
pub const SPHERE_NORM_TOL: f64 = 1e-6;
pub const COMPOSITION_SUM_TOL: f64 = 1e-6;
pub const MIN_LENGTH: usize = 8;

/// Declared geometry of a file: manifold kind and number of CSV columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetKind {
    pub manifold: ManifoldKind,
    pub ambient_dim: usize,
}

impl DatasetKind {
    pub fn to_manifold(self) -> Result<Manifold> {
        let k = self.ambient_dim;
        match self.manifold {
            ManifoldKind::Sphere if k >= 2 => Ok(Manifold::sphere(k - 1)),
            ManifoldKind::Euclidean if k >= 1 => Ok(Manifold::euclidean(k)),
            ManifoldKind::Spd => match triangular_side(k) {
                Some(n) => Ok(Manifold::spd(n)),
                None => Err(CliError::Input(format!(
                    "SPD files need n(n+1)/2 columns; {k} is not of that form"
                ))),
            },
            kind => Err(CliError::Input(format!(
                "ambient dimension {k} is too small for {kind:?}"
            ))),
        }
    }

    /// CSV width for a manifold.
    pub fn of(m: Manifold) -> Self {
        let ambient_dim = match m.matrix_size() {
            Some(n) => n * (n + 1) / 2,
            None => m.ambient_dim(),
        };
        DatasetKind {
            manifold: m.kind(),
            ambient_dim,
        }
    }
}

fn triangular_side(k: usize) -> Option<usize> {
    (1..=k).take_while(|n| n * (n + 1) / 2 <= k).find(|n| n * (n + 1) / 2 == k)
}

/// Sidecar manifest contents; every field optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub manifold: Option<ManifoldKind>,
    pub ambient_dim: Option<usize>,
    pub compositional: Option<bool>,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.toml");
    PathBuf::from(s)
}

pub fn read_manifest(path: &Path) -> Result<Option<Manifest>> {
    let mp = manifest_path(path);
    if !mp.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&mp).map_err(|e| CliError::io(mp.display(), e))?;
    toml::from_str(&text)
        .map(Some)
        .map_err(|e| CliError::Input(format!("{}: {}", mp.display(), e.message())))
}

/// Command-line overrides for the manifest.
#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub manifold: Option<ManifoldKind>,
    pub ambient_dim: Option<usize>,
    pub compositional: bool,
}

/// Header and numeric rows. Row numbers in errors count data rows from 1.
pub fn read_rows(reader: impl Read) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| CliError::Row { row, message: e.to_string() })?;
        let vals = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CliError::Row { row, message: format!("{f:?} is not a finite number") })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(vals);
    }
    Ok((header, rows))
}

fn csv_error(e: csv::Error) -> CliError {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io("csv", io),
            _ => unreachable!(),
        },
        _ => CliError::Input(format!("malformed CSV: {e}")),
    }
}

fn check_shape(rows: &[Vec<f64>], width: usize) -> Result<()> {
    if rows.len() < MIN_LENGTH {
        return Err(CliError::Input(format!(
            "series has {} rows; at least {MIN_LENGTH} are needed",
            rows.len()
        )));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(CliError::Row {
                row: i + 1,
                message: format!("{} columns, expected {width}", r.len()),
            });
        }
    }
    Ok(())
}

/// Validates numeric rows against `kind` and builds the series.
pub fn rows_to_series(rows: &[Vec<f64>], kind: DatasetKind) -> Result<ManifoldSeries> {
    let m = kind.to_manifold()?;
    check_shape(rows, kind.ambient_dim)?;
    let mut points = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let row = i + 1;
        let wrap = |e: mstat_core::Error| CliError::Row { row, message: e.root().to_string() };
        let v = DVector::from_column_slice(r);
        let p = match m.kind() {
            ManifoldKind::Sphere => {
                let norm = v.norm();
                if (norm - 1.0).abs() > SPHERE_NORM_TOL {
                    return Err(CliError::Row {
                        row,
                        message: format!("norm {norm} is not within {SPHERE_NORM_TOL:e} of 1"),
                    });
                }
                m.point(v / norm).map_err(wrap)?
            }
            ManifoldKind::Spd => {
                let n = m.matrix_size().unwrap_or(0);
                let a = upper_to_matrix(r, n);
                if a.clone().cholesky().is_none() {
                    return Err(CliError::Row {
                        row,
                        message: "matrix is not positive definite".into(),
                    });
                }
                m.point_from_matrix(&a).map_err(wrap)?
            }
            ManifoldKind::Euclidean => m.point(v).map_err(wrap)?,
        };
        points.push(p);
    }
    Ok(ManifoldSeries::new(m, points)?)
}

fn upper_to_matrix(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    let mut it = v.iter();
    for j in 0..n {
        for k in j..n {
            let x = *it.next().expect("row width checked");
            a[(j, k)] = x;
            a[(k, j)] = x;
        }
    }
    a
}

/// Square-root transform of compositions onto `S^{D−1}`.
pub fn sqrt_compose(rows: &[Vec<f64>]) -> Result<ManifoldSeries> {
    let width = rows.first().map(Vec::len).unwrap_or(0);
    if width < 2 {
        return Err(CliError::Input("compositions need at least two parts".into()));
    }
    check_shape(rows, width)?;
    let m = Manifold::sphere(width - 1);
    let mut points = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let row = i + 1;
        if let Some(x) = r.iter().find(|x| **x < 0.0) {
            return Err(CliError::Row {
                row,
                message: format!("negative proportion {x}"),
            });
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > COMPOSITION_SUM_TOL {
            return Err(CliError::Row {
                row,
                message: format!("proportions sum to {sum}, not 1"),
            });
        }
        let v = DVector::from_iterator(width, r.iter().map(|x| x.sqrt()));
        let norm = v.norm();
        points.push(m.point(v / norm).map_err(|e| CliError::Row { row, message: e.to_string() })?);
    }
    Ok(ManifoldSeries::new(m, points)?)
}

/// Reads a dataset file. Flags override the sidecar manifest; the kind must
/// be declared by one of them, the width defaults to the column count.
pub fn ingest(path: &Path, opts: &IngestOptions) -> Result<(ManifoldSeries, DatasetKind)> {
    let manifest = read_manifest(path)?.unwrap_or_default();
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path.display(), e))?;
    let (header, rows) = read_rows(file)?;
    let compositional = opts.compositional || manifest.compositional.unwrap_or(false);
    let kind = opts.manifold.or(manifest.manifold);
    let dim = opts.ambient_dim.or(manifest.ambient_dim);
    if let Some(d) = dim {
        if d != header.len() {
            return Err(CliError::Input(format!(
                "declared ambient dimension {d} but the header has {} columns",
                header.len()
            )));
        }
    }
    if compositional {
        if kind.is_some_and(|k| k != ManifoldKind::Sphere) {
            return Err(CliError::Input("compositional data map to the sphere".into()));
        }
        let s = sqrt_compose(&rows)?;
        let k = DatasetKind::of(s.manifold());
        return Ok((s, k));
    }
    let manifold = kind.ok_or_else(|| {
        CliError::Input(format!(
            "manifold kind not declared; pass --manifold or add {}",
            manifest_path(path).display()
        ))
    })?;
    let kind = DatasetKind {
        manifold,
        ambient_dim: dim.unwrap_or(header.len()),
    };
    Ok((rows_to_series(&rows, kind)?, kind))
}

/// Writes a series in the dataset format.
pub fn write_series(series: &ManifoldSeries, out: impl Write) -> Result<()> {
    let kind = DatasetKind::of(series.manifold());
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (1..=kind.ambient_dim).map(|j| format!("x{j}")).collect();
    w.write_record(&header).map_err(csv_error)?;
    for p in series.points() {
        let vals: Vec<f64> = match p.matrix() {
            Some(a) => {
                let n = a.nrows();
                (0..n).flat_map(|j| (j..n).map(move |k| (j, k))).map(|(j, k)| a[(j, k)]).collect()
            }
            None => p.coords().iter().copied().collect(),
        };
        // `{}` on f64 is the shortest representation that round-trips
        w.write_record(vals.iter().map(|v| v.to_string())).map_err(csv_error)?;
    }
    w.flush().map_err(|e| CliError::io("csv", e))
}
