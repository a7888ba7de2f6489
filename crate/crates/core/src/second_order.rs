//! Second-order stationarity: is the spectral density of the tangent
//! coordinate process `Log_μ X_i` time invariant?
//!
//! The series is cut into `m` blocks of even length `n`. On block `j` the
//! local DFT at the Fourier frequencies `ω_k = 2πk/n`, `k = 0..n/2`, is
//!
//! ```text
//! J_n(ω, t_j) = (2πn)^{-1/2} Σ_{h<n} Log_μ̂ X_{s_j+h} e^{-ihω},     I_n = J J*
//! ```
//!
//! and the statistic compares lag-one products of local periodograms with
//! the square of their average:
//!
//! ```text
//! V̂² = (4π/T) Σ_k Σ_j ⟨I_k,j, I_{k-1},j⟩ + Ŵ − (4π/n) Σ_k ‖m⁻¹ Σ_j I_k,j‖²
//! Ŵ  = (4π/(mT)) Σ_k Σ_j ‖J_k,j‖² ‖J_{k-1},j‖²
//! σ̂² = (16π²/n) Σ_k (m⁻¹ Σ_j ⟨I_{k-1},j, I_k,j⟩)²
//! ```
//!
//! with `k = 1..n/2` and `⟨A, B⟩ = tr(AB*)`. The test rejects for large
//! `z = √T V̂² / σ̂`.
//!
//! `Ŵ` removes the `O(1/m)` bias of the average-periodogram term: under the
//! null `E‖m⁻¹ Σ_j I_k,j‖² = ‖F‖² + E‖I − F‖²/m`, and `E‖I − F‖² = E‖J‖⁴ −
//! ‖F‖²`, which `‖J_k‖²‖J_{k-1}‖²` estimates without the diagonal bias.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::frechet::{frechet_mean, frechet_mean_of, FrechetConfig};
use crate::geometry::{hermitian_inner, parallel_frame, OrthonormalBasis, Point};
use crate::par::{map_indexed, try_map_indexed, Execution};
use crate::series::ManifoldSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Detrend {
    None,
    /// Sliding-window Fréchet smoother; `None` bandwidth means `⌊T/5⌋`.
    BlockFrechet { bandwidth: Option<usize> },
}

#[derive(Debug, Clone)]
pub struct SecondOrderConfig {
    /// Even block length `n`.
    pub block_n: usize,
    /// 1-based block start indices. `None` tiles `1..T` with `⌊T/n⌋`
    /// consecutive blocks; explicit starts may overlap.
    pub block_starts: Option<Vec<usize>>,
    pub alpha: f64,
    pub detrend: Detrend,
    pub exec: Execution,
}

impl SecondOrderConfig {
    pub fn new(block_n: usize) -> Self {
        SecondOrderConfig {
            block_n,
            block_starts: None,
            alpha: 0.05,
            detrend: Detrend::None,
            exec: Execution::Parallel,
        }
    }
}

/// `J_n(ω, t)` in an orthonormal basis; `I_n = J J*`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPeriodogram {
    pub j: DVector<Complex<f64>>,
    pub omega: f64,
    /// Block centre in rescaled time.
    pub t: f64,
}

impl LocalPeriodogram {
    pub fn matrix(&self) -> DMatrix<Complex<f64>> {
        &self.j * self.j.adjoint()
    }

    /// `tr(I)`.
    pub fn norm_sqr(&self) -> f64 {
        self.j.norm_squared()
    }

    /// `⟨I_self, I_other⟩_HS = |J_selfᴴ J_other|²` for rank-one periodograms.
    pub fn hs_inner(&self, other: &LocalPeriodogram) -> f64 {
        hermitian_inner(&self.j, &other.j).norm_sqr()
    }
}

/// Local DFT vectors for every block and frequency `ω_0..ω_{n/2}`.
#[derive(Debug, Clone)]
pub struct Periodograms {
    pub n: usize,
    /// Time points covered (`m·n`), the `T` of the formulas.
    pub t_eff: usize,
    /// 0-based block starts.
    pub starts: Vec<usize>,
    /// `j[block][k]`.
    pub j: Vec<Vec<DVector<Complex<f64>>>>,
}

impl Periodograms {
    pub fn m(&self) -> usize {
        self.starts.len()
    }

    pub fn get(&self, block: usize, k: usize, series_len: usize) -> LocalPeriodogram {
        LocalPeriodogram {
            j: self.j[block][k].clone(),
            omega: fourier_frequency(k, self.n),
            t: (self.starts[block] + self.n / 2) as f64 / series_len as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct V2Terms {
    pub v2: f64,
    /// `(4π/T) Σ Σ ⟨I_k, I_{k-1}⟩`.
    pub lag_term: f64,
    pub w: f64,
    /// `(4π/n) Σ ‖m⁻¹ Σ_j I_k‖²`.
    pub average_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderReport {
    pub t: usize,
    pub block_n: usize,
    pub m: usize,
    pub v2_hat: f64,
    pub lag_term: f64,
    pub w_hat: f64,
    pub average_term: f64,
    pub sigma2_hat: f64,
    pub z: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    /// Observations after the last tiling block.
    pub dropped: usize,
    /// Explicit block starts that do not tile `1..m·n`.
    pub non_tiling: bool,
    pub detrend: Detrend,
    pub warnings: Vec<String>,
}

pub fn fourier_frequency(k: usize, n: usize) -> f64 {
    2.0 * PI * k as f64 / n as f64
}

/// `(2πn)^{-1/2} Σ_h coords[:, start+h] e^{-ihω}` (0-based `start`).
fn local_dft(coords: &DMatrix<f64>, start: usize, n: usize, omega: f64) -> DVector<Complex<f64>> {
    let d = coords.nrows();
    let mut acc = DVector::from_element(d, Complex::new(0.0, 0.0));
    for h in 0..n {
        let (s, c) = (h as f64 * omega).sin_cos();
        let phase = Complex::new(c, -s);
        for (a, &x) in acc.iter_mut().zip(coords.column(start + h).iter()) {
            *a += phase * x;
        }
    }
    acc.unscale((2.0 * PI * n as f64).sqrt())
}

/// Local periodogram of `series` at frequency `omega` on the window
/// `⌊tT⌋−n/2+1 … ⌊tT⌋+n/2` (1-based).
pub fn local_periodogram(
    series: &ManifoldSeries,
    mean: &Point,
    basis: &OrthonormalBasis,
    omega: f64,
    t: f64,
    n: usize,
) -> Result<LocalPeriodogram> {
    check_block_n(n, series.len())?;
    if basis.base() != mean {
        return Err(Error::InvalidInput("basis must live at the mean".into()));
    }
    let len = series.len();
    let centre = floor_near_integer(t * len as f64);
    let mut first = centre - (n / 2) as i64 + 1;
    if first == 0 {
        log::info!("window at t = {t} starts at index 0, shifted to 1");
        first = 1;
    }
    let last = first + n as i64 - 1;
    if first < 1 || last > len as i64 {
        return Err(Error::InvalidInput(format!(
            "periodogram window {first}..={last} at t = {t} leaves 1..={len}"
        )));
    }
    let start = (first - 1) as usize;
    let pts = &series.points()[start..start + n];
    let window = ManifoldSeries::new(series.manifold(), pts.to_vec())?;
    let coords = window
        .log_coords(basis, Execution::Sequential)
        .map_err(|e| reindex(e, start))?;
    Ok(LocalPeriodogram {
        j: local_dft(&coords, 0, n, omega),
        omega,
        t,
    })
}

fn reindex(e: Error, offset: usize) -> Error {
    match e {
        Error::AtIndex { index, source } => Error::AtIndex {
            index: index + offset,
            source,
        },
        e => e,
    }
}

/// `⌊x⌋`, treating values within rounding of an integer as that integer.
fn floor_near_integer(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as i64
    } else {
        x.floor() as i64
    }
}

fn check_block_n(n: usize, t: usize) -> Result<()> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("block length {n} must be even and at least 2")));
    }
    if n > t {
        return Err(Error::InvalidInput(format!("block length {n} exceeds series length {t}")));
    }
    Ok(())
}

/// 0-based block starts, dropped trailing observations, and whether explicit
/// starts depart from the tiling layout.
pub fn block_layout(t: usize, n: usize, explicit: Option<&[usize]>) -> Result<(Vec<usize>, usize, bool)> {
    check_block_n(n, t)?;
    match explicit {
        None => {
            let m = t / n;
            Ok(((0..m).map(|j| j * n).collect(), t - m * n, false))
        }
        Some(starts) => {
            if starts.is_empty() {
                return Err(Error::InvalidInput("empty block start list".into()));
            }
            for (j, &s) in starts.iter().enumerate() {
                if s < 1 || s + n - 1 > t {
                    return Err(Error::InvalidInput(format!(
                        "block {} starting at {s} with length {n} leaves 1..={t}",
                        j + 1
                    )));
                }
            }
            let tiling = starts.iter().enumerate().all(|(j, &s)| s == j * n + 1);
            let covered = starts.iter().max().map_or(0, |&s| s + n - 1);
            Ok((starts.iter().map(|s| s - 1).collect(), t - covered, !tiling))
        }
    }
}

/// Local DFTs of coordinate columns (`d × T`) on the given blocks.
pub fn periodograms_from_coords(coords: &DMatrix<f64>, n: usize, starts: &[usize], exec: Execution) -> Periodograms {
    let j = map_indexed(starts.len(), exec, |b| {
        (0..=n / 2)
            .map(|k| local_dft(coords, starts[b], n, fourier_frequency(k, n)))
            .collect()
    });
    Periodograms {
        n,
        t_eff: starts.len() * n,
        starts: starts.to_vec(),
        j,
    }
}

/// The three terms of `V̂²`.
pub fn v2_from_periodograms(p: &Periodograms) -> V2Terms {
    let n = p.n;
    let m = p.m() as f64;
    let t = p.t_eff as f64;
    let d = p.j.first().map_or(0, |b| b[0].len());
    let mut lag = 0.0;
    let mut w = 0.0;
    let mut avg_term = 0.0;
    for k in 1..=n / 2 {
        let mut avg = DMatrix::from_element(d, d, Complex::new(0.0, 0.0));
        for block in &p.j {
            let (a, b) = (&block[k], &block[k - 1]);
            lag += hermitian_inner(a, b).norm_sqr();
            w += a.norm_squared() * b.norm_squared();
            avg += a * a.adjoint();
        }
        avg /= Complex::new(m, 0.0);
        avg_term += avg.iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    let lag_term = 4.0 * PI / t * lag;
    let w = 4.0 * PI / (m * t) * w;
    let average_term = 4.0 * PI / n as f64 * avg_term;
    V2Terms {
        v2: lag_term + w - average_term,
        lag_term,
        w,
        average_term,
    }
}

/// `σ̂² = (16π²/n) Σ_{k=1}^{n/2} (m⁻¹ Σ_j ⟨I_{k-1}, I_k⟩)²`.
pub fn sigma2_estimator(p: &Periodograms) -> Result<f64> {
    let m = p.m() as f64;
    let mut s = 0.0;
    for k in 1..=p.n / 2 {
        let avg = p
            .j
            .iter()
            .map(|b| hermitian_inner(&b[k - 1], &b[k]).norm_sqr())
            .sum::<f64>()
            / m;
        s += avg * avg;
    }
    let s2 = 16.0 * PI * PI / p.n as f64 * s;
    if !(s2 > 0.0 && s2.is_finite()) {
        return Err(Error::Degenerate(format!(
            "variance estimate {s2:e} is not positive (all periodograms vanish?)"
        )));
    }
    Ok(s2)
}

/// `V̂²` and its terms from `series` with a known centre and basis at it.
pub fn v2_statistic(
    series: &ManifoldSeries,
    mean: &Point,
    basis: &OrthonormalBasis,
    cfg: &SecondOrderConfig,
) -> Result<(V2Terms, Periodograms)> {
    if basis.base() != mean {
        return Err(Error::InvalidInput("basis must live at the mean".into()));
    }
    let coords = series.log_coords(basis, cfg.exec)?;
    let (starts, _, _) = block_layout(series.len(), cfg.block_n, cfg.block_starts.as_deref())?;
    let p = periodograms_from_coords(&coords, cfg.block_n, &starts, cfg.exec);
    Ok((v2_from_periodograms(&p), p))
}

/// The z-test on tangent coordinates (`d × T`), e.g. after detrending.
pub fn second_order_test_coords(coords: &DMatrix<f64>, cfg: &SecondOrderConfig) -> Result<SecondOrderReport> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha {} not in (0, 1)", cfg.alpha)));
    }
    let t = coords.ncols();
    let n = cfg.block_n;
    let (starts, dropped, non_tiling) = block_layout(t, n, cfg.block_starts.as_deref())?;
    let mut warnings = Vec::new();
    if dropped > 0 && !non_tiling {
        warnings.push(format!("{dropped} trailing observations not covered by {n}-blocks are dropped"));
    }
    if non_tiling {
        warnings.push("explicit block starts do not tile the series".to_string());
    }
    let tf = t as f64;
    if (n as f64) < tf.sqrt() || (n as f64) > tf.powf(2.0 / 3.0) {
        warnings.push(format!(
            "block length {n} outside the recommended range [{:.1}, {:.1}]",
            tf.sqrt(),
            tf.powf(2.0 / 3.0)
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let p = periodograms_from_coords(coords, n, &starts, cfg.exec);
    let terms = v2_from_periodograms(&p);
    let sigma2 = sigma2_estimator(&p)?;
    let z = (p.t_eff as f64).sqrt() * terms.v2 / sigma2.sqrt();
    let p_value = Normal::standard().sf(z);
    Ok(SecondOrderReport {
        t,
        block_n: n,
        m: p.m(),
        v2_hat: terms.v2,
        lag_term: terms.lag_term,
        w_hat: terms.w,
        average_term: terms.average_term,
        sigma2_hat: sigma2,
        z,
        p_value,
        alpha: cfg.alpha,
        reject: p_value <= cfg.alpha,
        dropped,
        non_tiling,
        detrend: cfg.detrend.clone(),
        warnings,
    })
}

/// Fréchet mean (or detrending), tangent coordinates in a fixed basis, and
/// the one-sided z-test.
pub fn second_order_test(series: &ManifoldSeries, cfg: &SecondOrderConfig) -> Result<SecondOrderReport> {
    let coords = match cfg.detrend {
        Detrend::None => {
            let fcfg = FrechetConfig {
                exec: cfg.exec,
                ..Default::default()
            };
            let (mean, _) = frechet_mean(series, &fcfg)?;
            let basis = OrthonormalBasis::standard(&mean)?;
            series.log_coords(&basis, cfg.exec)?
        }
        Detrend::BlockFrechet { bandwidth } => {
            let bw = bandwidth.unwrap_or(series.len() / 5);
            detrend_with(series, bw, cfg.exec)?.0
        }
    };
    second_order_test_coords(&coords, cfg)
}

/// Removes a slowly varying mean. Around each `i` a window of `bandwidth`
/// consecutive observations (shifted inward near the ends, never shrunk) is
/// summarised by its Fréchet mean `m` and a least-squares line through the
/// logs at `m`; `μ̂(i/T)` is the exponential of that line at `i`. On a
/// geodesic the logs are exactly linear, so a pure geodesic trend is removed
/// without edge bias. Each `Log_{μ̂(i/T)} X_i` is expressed in the frame
/// obtained by parallel transport of the standard basis at `μ̂(1/T)` along the
/// piecewise-geodesic curve through the `μ̂(i/T)`, which equals its
/// coordinates after transport back to `μ̂(1/T)`.
///
/// Returns coordinates (`d × T`) and `μ̂(1/T)`.
pub fn detrend(series: &ManifoldSeries, bandwidth: usize) -> Result<(DMatrix<f64>, Point)> {
    detrend_with(series, bandwidth, Execution::Parallel)
}

fn detrend_with(series: &ManifoldSeries, bandwidth: usize, exec: Execution) -> Result<(DMatrix<f64>, Point)> {
    if bandwidth < 2 {
        return Err(Error::InvalidInput(format!("detrend bandwidth {bandwidth} must be at least 2")));
    }
    let t = series.len();
    if t == 0 {
        return Err(Error::InvalidInput("empty series".into()));
    }
    let pts = series.points();
    let fcfg = FrechetConfig::default();
    let w = bandwidth.min(t);
    let curve = try_map_indexed(t, exec, |i| {
        let start = i.saturating_sub(w / 2).min(t - w);
        local_linear(&pts[start..start + w], i - start, &fcfg).map_err(|e| e.at(i + 1))
    })?;
    let frames = parallel_frame(&curve, &OrthonormalBasis::standard(&curve[0])?)?;
    let m = series.manifold();
    let cols = try_map_indexed(t, exec, |i| {
        m.log_raw(curve[i].coords(), pts[i].coords())
            .map(|v| frames[i].coords_of_ambient(&v))
            .map_err(|e| e.at(i + 1))
    })?;
    Ok((DMatrix::from_columns(&cols), curve[0].clone()))
}

/// Tangent-line fit at the window's Fréchet mean, evaluated at offset `at`.
fn local_linear(window: &[Point], at: usize, fcfg: &FrechetConfig) -> Result<Point> {
    let (mean, _) = frechet_mean_of(window, fcfg)?;
    let m = mean.manifold();
    let n = window.len() as f64;
    let centre = (n - 1.0) / 2.0;
    let dim = mean.coords().len();
    let (mut level, mut slope, mut sxx) = (DVector::zeros(dim), DVector::zeros(dim), 0.0);
    for (k, x) in window.iter().enumerate() {
        let v = m.log_raw(mean.coords(), x.coords())?;
        let s = k as f64 - centre;
        slope += s * &v;
        level += v;
        sxx += s * s;
    }
    level /= n;
    if sxx > 0.0 {
        level += slope * ((at as f64 - centre) / sxx);
    }
    m.point(m.exp_raw(mean.coords(), &level)?)
}

#[cfg(test)]
mod tests;
