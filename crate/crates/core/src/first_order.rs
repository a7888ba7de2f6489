//! First-order stationarity: is the intrinsic mean constant over time?
//!
//! The statistic is the CUSUM `Q_T = max_j ‖T^{-1/2} Σ_{i≤j} Log_μ̂ X_i‖_μ̂`.
//! Its null law depends on curvature through the Hessian partial-sum
//! process `Ĥ_k = T^{-1} Σ_{i≤k} H(μ̂, X_i)` of `d²(·, X_i)/2`. The curvature
//! adjusted multiplier bootstrap (CAMB) draws
//!
//! ```text
//! V_k = Σ_{j≤k} (n(T−n+1))^{-1/2} S_{j,n} R_j,     S_{j,n} = Σ_{i=j}^{j+n−1} v_i
//! Q^(b) = max_{n≤k≤T−n+1} ‖V_k − Ĥ_k Ĥ_T^{-1} V_{T−n+1}‖
//! ```
//!
//! with i.i.d. standard normal multipliers `R_j`, `j = 1..T−n+1`.
//!
//! Two baselines share the same engine: B1 replaces `Ĥ_k Ĥ_T^{-1}` by
//! `(k/T)·Id`, and B2 additionally works on raw ambient coordinates with the
//! ambient sample average as centre.

use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frechet::{frechet_mean, FrechetConfig};
use crate::geometry::linalg;
use crate::geometry::{hessian, ManifoldKind, OrthonormalBasis, Point, SelfAdjointOperator, TangentVector};
use crate::par::{map_indexed, try_map_indexed, Execution};
use crate::rng;
use crate::series::{ambient_average, ManifoldSeries};

/// `Ĥ_T` with a smaller eigenvalue is refused rather than regularized.
pub const MIN_HESSIAN_EIGENVALUE: f64 = 1e-8;
/// Pilot bootstrap size for minimum-volatility block selection.
pub const PILOT_DRAWS: usize = 200;
/// Quantile of the pilot draws tracked across block sizes.
pub const PILOT_QUANTILE: f64 = 0.95;

const PILOT_LABEL: u64 = 0x0050_494c_4f54;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Curvature adjusted multiplier bootstrap.
    Camb,
    /// Multiplier bootstrap ignoring the curvature term.
    B1,
    /// Flat multiplier bootstrap on ambient coordinates.
    B2,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Camb => "camb",
            Method::B1 => "b1",
            Method::B2 => "b2",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FirstOrderConfig {
    pub bootstrap_b: usize,
    /// `None` selects the block size by minimum volatility.
    pub block_n: Option<usize>,
    /// Candidate block sizes for minimum-volatility selection; `None` uses
    /// [`default_block_candidates`].
    pub block_candidates: Option<RangeInclusive<usize>>,
    pub seed: u64,
    pub method: Method,
    pub alpha: f64,
    pub exec: Execution,
}

impl Default for FirstOrderConfig {
    fn default() -> Self {
        FirstOrderConfig {
            bootstrap_b: 2000,
            block_n: None,
            block_candidates: None,
            seed: 0,
            method: Method::Camb,
            alpha: 0.05,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HessianDiagnostics {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderReport {
    pub method: Method,
    pub t: usize,
    pub q_t: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub block_n: usize,
    pub block_selected: bool,
    pub bootstrap_draws: Vec<f64>,
    /// Conditioning of `Ĥ_T`; absent for the baselines.
    pub hessian: Option<HessianDiagnostics>,
    pub seed: u64,
}

/// `{2, …, min(⌈1.5·T^{1/3}⌉, ⌊T/12⌋)}`, never empty.
///
/// The minimum-volatility profile flattens as `n` grows, so the selected
/// block tends to sit near the top of this range; the cap keeps the grid on
/// the `T^{1/3}` scale and at least twelve blocks in the series. When fewer
/// than three candidates remain (`T < 36`) the test uses `n = 2` directly.
pub fn default_block_candidates(t: usize) -> RangeInclusive<usize> {
    let upper = ((1.5 * (t as f64).cbrt()).ceil() as usize).min(t / 12);
    2..=upper.max(2)
}

/// CUSUM statistic and the partial sums `S_j = Σ_{i≤j} Log_mean X_i`.
pub fn cusum_statistic(series: &ManifoldSeries, mean: &Point) -> Result<(f64, Vec<TangentVector>)> {
    let m = series.manifold();
    let t = series.len();
    if t == 0 {
        return Err(Error::InvalidInput("empty series".into()));
    }
    let mut acc = DVector::zeros(m.ambient_dim());
    let mut sums = Vec::with_capacity(t);
    let mut q = 0.0f64;
    for (i, x) in series.points().iter().enumerate() {
        acc += m.log_raw(mean.coords(), x.coords()).map_err(|e| e.at(i + 1))?;
        let norm = m.inner_raw(mean.coords(), &acc, &acc)?.max(0.0).sqrt();
        q = q.max(norm / (t as f64).sqrt());
        sums.push(TangentVector::from_raw(mean.clone(), acc.clone()));
    }
    Ok((q, sums))
}

/// `Ĥ_j = T^{-1} Σ_{i≤j} H(mean, X_i)` for `j = 1..T`.
///
/// Fails with a degenerate-data error when the smallest eigenvalue of `Ĥ_T`
/// is below [`MIN_HESSIAN_EIGENVALUE`].
pub fn hessian_process(
    series: &ManifoldSeries,
    mean: &Point,
    basis: &OrthonormalBasis,
) -> Result<Vec<SelfAdjointOperator>> {
    hessian_process_with(series, mean, basis, Execution::Sequential)
}

fn hessian_process_with(
    series: &ManifoldSeries,
    mean: &Point,
    basis: &OrthonormalBasis,
    exec: Execution,
) -> Result<Vec<SelfAdjointOperator>> {
    let t = series.len();
    let d = basis.dim();
    let pts = series.points();
    let hs = try_map_indexed(t, exec, |i| {
        hessian(mean, &pts[i], basis).map(|h| h.matrix).map_err(|e| e.at(i + 1))
    })?;
    // Partial sums are accumulated unscaled and divided once, so that in flat
    // space Ĥ_k is exactly (k/T)·Id.
    let mut acc = DMatrix::zeros(d, d);
    let mut out = Vec::with_capacity(t);
    for h in hs {
        acc += h;
        out.push(SelfAdjointOperator {
            base: mean.clone(),
            matrix: &acc / t as f64,
        });
    }
    if let Some(last) = out.last() {
        let min = last.min_eigenvalue();
        if !(min >= MIN_HESSIAN_EIGENVALUE) {
            return Err(Error::Degenerate(format!(
                "Hessian partial sum at T has smallest eigenvalue {min:e}"
            )));
        }
    }
    Ok(out)
}

/// `Ĥ_k ∘ Ĥ_T^{-1}` for `k = 1..T`, with diagnostics on `Ĥ_T`.
pub fn curvature_operators(process: &[SelfAdjointOperator]) -> Result<(Vec<DMatrix<f64>>, HessianDiagnostics)> {
    let last = process
        .last()
        .ok_or_else(|| Error::InvalidInput("empty Hessian process".into()))?;
    let (inv, min, max) = linalg::sym_inverse(&last.matrix, MIN_HESSIAN_EIGENVALUE)?;
    let ops = process.iter().map(|h| &h.matrix * &inv).collect();
    Ok((
        ops,
        HessianDiagnostics {
            min_eigenvalue: min,
            max_eigenvalue: max,
        },
    ))
}

/// `(k/T)·Id` for `k = 1..T`.
pub fn flat_operators(t: usize, d: usize) -> Vec<DMatrix<f64>> {
    (1..=t)
        .map(|k| DMatrix::identity(d, d) * (k as f64 / t as f64))
        .collect()
}

/// Multiplier bootstrap on residual coordinates (`d × T`, one column per
/// time point) with centring operators `A_k` (`k = 1..T`).
pub struct MultiplierBootstrap<'a> {
    resid: &'a DMatrix<f64>,
    ops: &'a [DMatrix<f64>],
}

impl<'a> MultiplierBootstrap<'a> {
    pub fn new(resid: &'a DMatrix<f64>, ops: &'a [DMatrix<f64>]) -> Result<Self> {
        if ops.len() != resid.ncols() {
            return Err(Error::DimensionMismatch {
                expected: resid.ncols(),
                got: ops.len(),
            });
        }
        Ok(MultiplierBootstrap { resid, ops })
    }

    pub fn len(&self) -> usize {
        self.resid.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.resid.ncols() == 0
    }

    /// `max_j ‖S_j‖ / √T`.
    pub fn statistic(&self) -> f64 {
        let t = self.len();
        let mut acc = DVector::zeros(self.resid.nrows());
        let mut q = 0.0f64;
        for col in self.resid.column_iter() {
            acc += col;
            q = q.max(acc.norm());
        }
        q / (t as f64).sqrt()
    }

    fn check_block(&self, n: usize) -> Result<()> {
        if n == 0 || 4 * n > self.len() {
            return Err(Error::InvalidInput(format!(
                "block size {n} needs 1 ≤ n and 4n ≤ T = {}",
                self.len()
            )));
        }
        Ok(())
    }

    /// Moving-block sums `S_{j,n}`, `j = 1..T−n+1`.
    fn block_sums(&self, n: usize) -> DMatrix<f64> {
        let t = self.len();
        let l = t - n + 1;
        let mut out = DMatrix::zeros(self.resid.nrows(), l);
        for j in 0..l {
            // direct summation keeps every block sum independent of rounding
            // drift from a running window
            let mut s = out.column_mut(j);
            for i in j..j + n {
                s += self.resid.column(i);
            }
        }
        out
    }

    /// `B` bootstrap replicates of the statistic; draw `b` uses the random
    /// stream `(seed, b)`.
    pub fn draws(&self, n: usize, count: usize, seed: u64, exec: Execution) -> Result<Vec<f64>> {
        self.check_block(n)?;
        let sums = self.block_sums(n);
        Ok(map_indexed(count, exec, |b| self.draw(n, &sums, seed, b as u64)))
    }

    fn draw(&self, n: usize, sums: &DMatrix<f64>, seed: u64, b: u64) -> f64 {
        let t = self.len();
        let d = self.resid.nrows();
        let l = t - n + 1;
        let scale = 1.0 / ((n * l) as f64).sqrt();
        let mut rng = rng::stream(seed, b);
        let mut v = DVector::zeros(d);
        // V_k for k = n..=l
        let mut kept = DMatrix::zeros(d, l - n + 1);
        for j in 0..l {
            let r: f64 = StandardNormal.sample(&mut rng);
            v.axpy(r * scale, &sums.column(j), 1.0);
            let k = j + 1;
            if k >= n {
                kept.set_column(k - n, &v);
            }
        }
        let end = kept.column(l - n).into_owned();
        let mut q = 0.0f64;
        let mut tmp = DVector::zeros(d);
        for (idx, vk) in kept.column_iter().enumerate() {
            let k = idx + n;
            tmp.gemv(1.0, &self.ops[k - 1], &end, 0.0);
            let mut s = 0.0;
            for i in 0..d {
                let diff = vk[i] - tmp[i];
                s += diff * diff;
            }
            q = q.max(s);
        }
        q.sqrt()
    }

    /// Minimum-volatility block size: for each candidate `n` the
    /// [`PILOT_QUANTILE`] quantile `q(n)` of [`PILOT_DRAWS`] pilot draws, then
    /// the interior candidate minimizing the standard deviation of
    /// `{q(n−1), q(n), q(n+1)}` (smallest `n` on ties). A completely flat
    /// profile carries no preference and returns the smallest candidate.
    pub fn select_block_size(
        &self,
        candidates: RangeInclusive<usize>,
        seed: u64,
        exec: Execution,
    ) -> Result<usize> {
        let cands: Vec<usize> = candidates.collect();
        if cands.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "minimum-volatility selection needs at least 3 candidate block sizes, got {}",
                cands.len()
            )));
        }
        if cands[0] < 1 || 4 * cands[cands.len() - 1] > self.len() {
            return Err(Error::InvalidInput(format!(
                "candidate block sizes {}..={} must lie in [1, T/4] for T = {}",
                cands[0],
                cands[cands.len() - 1],
                self.len()
            )));
        }
        let pilot_seed = rng::derive_seed(seed, PILOT_LABEL);
        let qs = cands
            .iter()
            .map(|&n| {
                let mut d = self.draws(n, PILOT_DRAWS, pilot_seed, exec)?;
                Ok(quantile(&mut d, PILOT_QUANTILE))
            })
            .collect::<Result<Vec<f64>>>()?;
        if qs.iter().all(|&q| q == qs[0]) {
            return Ok(cands[0]);
        }
        let mut best = (f64::INFINITY, cands[1]);
        for i in 1..cands.len() - 1 {
            let vi = std_dev(&qs[i - 1..=i + 1]);
            if vi < best.0 {
                best = (vi, cands[i]);
            }
        }
        Ok(best.1)
    }
}

/// Linear-interpolation sample quantile; sorts `xs` in place.
pub fn quantile(xs: &mut [f64], p: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn validate(series: &ManifoldSeries, cfg: &FirstOrderConfig) -> Result<()> {
    if series.len() < 8 {
        return Err(Error::InvalidInput(format!(
            "series of length {} is too short (need at least 8)",
            series.len()
        )));
    }
    if cfg.bootstrap_b == 0 {
        return Err(Error::InvalidInput("bootstrap size must be positive".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha {} not in (0, 1)", cfg.alpha)));
    }
    Ok(())
}

fn run(
    boot: &MultiplierBootstrap<'_>,
    cfg: &FirstOrderConfig,
    method: Method,
    hessian: Option<HessianDiagnostics>,
) -> Result<FirstOrderReport> {
    let t = boot.len();
    let (block_n, block_selected) = match cfg.block_n {
        Some(n) => (n, false),
        None => {
            let cands = cfg.block_candidates.clone().unwrap_or_else(|| default_block_candidates(t));
            if cfg.block_candidates.is_none() && cands.clone().count() < 3 {
                (*cands.start(), false)
            } else {
                (boot.select_block_size(cands, cfg.seed, cfg.exec)?, true)
            }
        }
    };
    let q_t = boot.statistic();
    let draws = boot.draws(block_n, cfg.bootstrap_b, cfg.seed, cfg.exec)?;
    let exceed = draws.iter().filter(|&&q| q >= q_t).count();
    let p_value = exceed as f64 / cfg.bootstrap_b as f64;
    Ok(FirstOrderReport {
        method,
        t,
        q_t,
        p_value,
        alpha: cfg.alpha,
        reject: p_value <= cfg.alpha,
        block_n,
        block_selected,
        bootstrap_draws: draws,
        hessian,
        seed: cfg.seed,
    })
}

/// CAMB test with the intrinsic mean `mean` already estimated.
pub fn camb_bootstrap(series: &ManifoldSeries, mean: &Point, cfg: &FirstOrderConfig) -> Result<FirstOrderReport> {
    validate(series, cfg)?;
    let basis = OrthonormalBasis::standard(mean)?;
    let resid = series.log_coords(&basis, cfg.exec)?;
    let process = hessian_process_with(series, mean, &basis, cfg.exec)?;
    let (ops, diag) = curvature_operators(&process)?;
    let boot = MultiplierBootstrap::new(&resid, &ops)?;
    run(&boot, cfg, Method::Camb, Some(diag))
}

/// Baseline that bootstraps `sup_t ‖U(t) − t U(1)‖`, ignoring curvature.
pub fn b1_bootstrap(series: &ManifoldSeries, mean: &Point, cfg: &FirstOrderConfig) -> Result<FirstOrderReport> {
    validate(series, cfg)?;
    let basis = OrthonormalBasis::standard(mean)?;
    let resid = series.log_coords(&basis, cfg.exec)?;
    let ops = flat_operators(series.len(), basis.dim());
    let boot = MultiplierBootstrap::new(&resid, &ops)?;
    run(&boot, cfg, Method::B1, None)
}

/// Ambient coordinates used by the flat baseline: the vector itself for
/// spheres and Euclidean data, the row-major upper triangle for SPD matrices.
pub fn ambient_embedding(series: &ManifoldSeries) -> DMatrix<f64> {
    let m = series.manifold();
    let cols: Vec<DVector<f64>> = match m.kind() {
        ManifoldKind::Spd => {
            let n = m.matrix_size().unwrap_or(0);
            series
                .points()
                .iter()
                .map(|p| {
                    let a = p.matrix().unwrap_or_else(|| DMatrix::zeros(n, n));
                    let mut v = Vec::with_capacity(n * (n + 1) / 2);
                    for j in 0..n {
                        for k in j..n {
                            v.push(a[(j, k)]);
                        }
                    }
                    DVector::from_vec(v)
                })
                .collect()
        }
        _ => series.points().iter().map(|p| p.coords().clone()).collect(),
    };
    DMatrix::from_columns(&cols)
}

/// Baseline treating the series as a Euclidean multivariate series of its
/// ambient coordinates.
pub fn b2_bootstrap(series: &ManifoldSeries, cfg: &FirstOrderConfig) -> Result<FirstOrderReport> {
    validate(series, cfg)?;
    let mut resid = ambient_embedding(series);
    // same arithmetic as the Euclidean Fréchet mean, so flat input
    // reproduces the intrinsic tests exactly
    let cols: Vec<DVector<f64>> = resid.column_iter().map(|c| c.into_owned()).collect();
    let mean = ambient_average(cols.iter(), resid.nrows());
    for mut col in resid.column_iter_mut() {
        col -= &mean;
    }
    let ops = flat_operators(series.len(), resid.nrows());
    let boot = MultiplierBootstrap::new(&resid, &ops)?;
    run(&boot, cfg, Method::B2, None)
}

/// Minimum-volatility block size for the CAMB bootstrap.
pub fn select_block_size(
    series: &ManifoldSeries,
    mean: &Point,
    candidates: RangeInclusive<usize>,
    seed: u64,
) -> Result<usize> {
    let basis = OrthonormalBasis::standard(mean)?;
    let resid = series.log_coords(&basis, Execution::Parallel)?;
    let process = hessian_process_with(series, mean, &basis, Execution::Parallel)?;
    let (ops, _) = curvature_operators(&process)?;
    MultiplierBootstrap::new(&resid, &ops)?.select_block_size(candidates, seed, Execution::Parallel)
}

/// Full pipeline: intrinsic mean (for CAMB and B1), then the configured method.
pub fn first_order_test(series: &ManifoldSeries, cfg: &FirstOrderConfig) -> Result<FirstOrderReport> {
    match cfg.method {
        Method::B2 => b2_bootstrap(series, cfg),
        method => {
            let fcfg = FrechetConfig {
                exec: cfg.exec,
                ..Default::default()
            };
            let (mean, _) = frechet_mean(series, &fcfg)?;
            if method == Method::Camb {
                camb_bootstrap(series, &mean, cfg)
            } else {
                b1_bootstrap(series, &mean, cfg)
            }
        }
    }
}
