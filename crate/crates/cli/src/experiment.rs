//! Monte Carlo harness for the Type-I tables and the power curves.
//!
//! A cell is one (model, test, T, τ, block policy) combination run over a
//! number of replicates. Replicate `r` of a cell with seed `s` simulates with
//! seed `derive_seed(s, r)` and bootstraps with a seed derived from that, so a
//! cell's numbers depend only on its own fields, never on the grid around it
//! or on thread scheduling.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use mstat_core::first_order::{first_order_test, FirstOrderConfig, Method};
use mstat_core::par::try_map_indexed;
use mstat_core::rng::derive_seed;
use mstat_core::second_order::{second_order_test, SecondOrderConfig};
use mstat_core::simulate::{simulate, Model, SimSpec};
use mstat_core::{Execution, ManifoldKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

const BOOTSTRAP_LABEL: u64 = 0x424f_4f54;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Table1,
    Table2,
    PowerFirst,
    PowerSecond,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Table1 => "table1",
            ExperimentKind::Table2 => "table2",
            ExperimentKind::PowerFirst => "power-first",
            ExperimentKind::PowerSecond => "power-second",
        }
    }

    pub fn is_first_order(&self) -> bool {
        matches!(self, ExperimentKind::Table1 | ExperimentKind::PowerFirst)
    }

    /// Simulation model behind a manifold in this experiment.
    pub fn model(&self, manifold: ManifoldKind) -> Result<Model> {
        match (self.is_first_order(), manifold) {
            (true, ManifoldKind::Sphere) => Ok(Model::M1),
            (true, ManifoldKind::Spd) => Ok(Model::M2),
            (false, ManifoldKind::Sphere) => Ok(Model::M3Sphere),
            (false, ManifoldKind::Spd) => Ok(Model::M3Spd),
            (false, ManifoldKind::Euclidean) => Ok(Model::EuclideanAr),
            (true, ManifoldKind::Euclidean) => Err(CliError::Input(format!(
                "{} has no Euclidean model",
                self.name()
            ))),
        }
    }

    fn default_manifolds(&self) -> &'static [ManifoldKind] {
        match self {
            ExperimentKind::Table2 => &[ManifoldKind::Sphere, ManifoldKind::Spd, ManifoldKind::Euclidean],
            _ => &[ManifoldKind::Sphere, ManifoldKind::Spd],
        }
    }

    fn default_methods(&self) -> &'static [Method] {
        match self {
            ExperimentKind::Table1 => &[Method::Camb, Method::B1, Method::B2],
            _ => &[Method::Camb],
        }
    }

    fn default_t(&self) -> Vec<usize> {
        match self {
            ExperimentKind::Table1 => vec![50, 100, 500],
            ExperimentKind::Table2 => vec![256, 512, 1024],
            ExperimentKind::PowerFirst => vec![100, 500],
            ExperimentKind::PowerSecond => vec![1024],
        }
    }

    fn default_tau(&self) -> Vec<f64> {
        match self {
            ExperimentKind::Table1 | ExperimentKind::Table2 => vec![0.0],
            ExperimentKind::PowerFirst => vec![0.0, 0.25, 0.5, 0.75, 1.0],
            ExperimentKind::PowerSecond => vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.5],
        }
    }

    fn default_policy(&self) -> BlockPolicy {
        match self {
            ExperimentKind::Table1 | ExperimentKind::PowerFirst => BlockPolicy::MinVolatility,
            ExperimentKind::Table2 => BlockPolicy::Fraction(8),
            ExperimentKind::PowerSecond => BlockPolicy::Fixed(8),
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        [
            ExperimentKind::Table1,
            ExperimentKind::Table2,
            ExperimentKind::PowerFirst,
            ExperimentKind::PowerSecond,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| CliError::Usage(format!("unknown experiment {s:?}")))
    }
}

/// How a cell picks its block size: `mv` (minimum volatility), a fixed `n`,
/// or `T/k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum BlockPolicy {
    MinVolatility,
    Fixed(usize),
    Fraction(usize),
}

impl BlockPolicy {
    pub fn block_n(&self, t: usize) -> Option<usize> {
        match *self {
            BlockPolicy::MinVolatility => None,
            BlockPolicy::Fixed(n) => Some(n),
            BlockPolicy::Fraction(k) => Some(t / k),
        }
    }
}

impl fmt::Display for BlockPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockPolicy::MinVolatility => write!(f, "mv"),
            BlockPolicy::Fixed(n) => write!(f, "{n}"),
            BlockPolicy::Fraction(k) => write!(f, "T/{k}"),
        }
    }
}

impl FromStr for BlockPolicy {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CliError::Usage(format!("block policy {s:?} is not mv, an integer, or T/<k>"));
        let s = s.trim();
        if s == "mv" {
            return Ok(BlockPolicy::MinVolatility);
        }
        let (fraction, num) = match s.strip_prefix("T/") {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let v: usize = num.parse().map_err(|_| bad())?;
        if v == 0 {
            return Err(bad());
        }
        Ok(if fraction { BlockPolicy::Fraction(v) } else { BlockPolicy::Fixed(v) })
    }
}

impl From<BlockPolicy> for String {
    fn from(p: BlockPolicy) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for BlockPolicy {
    type Error = CliError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// First-order method, or the second-order test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    Camb,
    B1,
    B2,
    SecondOrder,
}

impl TestKind {
    pub fn name(&self) -> &'static str {
        match self {
            TestKind::Camb => "camb",
            TestKind::B1 => "b1",
            TestKind::B2 => "b2",
            TestKind::SecondOrder => "second-order",
        }
    }

    fn method(&self) -> Option<Method> {
        match self {
            TestKind::Camb => Some(Method::Camb),
            TestKind::B1 => Some(Method::B1),
            TestKind::B2 => Some(Method::B2),
            TestKind::SecondOrder => None,
        }
    }
}

impl From<Method> for TestKind {
    fn from(m: Method) -> Self {
        match m {
            Method::Camb => TestKind::Camb,
            Method::B1 => TestKind::B1,
            Method::B2 => TestKind::B2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub experiment: ExperimentKind,
    pub manifold: ManifoldKind,
    pub model: Model,
    pub test: TestKind,
    pub t: usize,
    pub tau: f64,
    pub n_policy: BlockPolicy,
    pub replicates: usize,
    pub bootstrap_b: usize,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub spec: CellSpec,
    pub rejections: usize,
    pub reject_rate: f64,
    /// Binomial standard error `√(p(1−p)/R)`.
    pub stderr: f64,
    /// Per-replicate p-values, in replicate order.
    pub p_values: Vec<f64>,
}

/// Resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub replicates: usize,
    pub t_values: Vec<usize>,
    pub tau_grid: Vec<f64>,
    pub bootstrap_b: usize,
    pub block_policy: BlockPolicy,
    pub alpha: f64,
    pub seed: u64,
    pub manifolds: Vec<ManifoldKind>,
    pub methods: Vec<Method>,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 500 replicates, `B = 500`, the experiment's own
    /// grid.
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            replicates: 500,
            t_values: experiment.default_t(),
            tau_grid: experiment.default_tau(),
            bootstrap_b: 500,
            block_policy: experiment.default_policy(),
            alpha: 0.05,
            seed: 0,
            manifolds: experiment.default_manifolds().to_vec(),
            methods: experiment.default_methods().to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Input(m));
        if self.replicates == 0 {
            return bad("replicates must be positive".into());
        }
        if self.bootstrap_b == 0 {
            return bad("bootstrap size must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} not in (0, 1)", self.alpha));
        }
        if self.t_values.is_empty() || self.tau_grid.is_empty() || self.manifolds.is_empty() {
            return bad("empty experiment grid".into());
        }
        if self.experiment.is_first_order() && self.methods.is_empty() {
            return bad("no first-order method selected".into());
        }
        if let Some(tau) = self.tau_grid.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return bad(format!("tau {tau} must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Cells in output order: manifold, method, T, τ.
    pub fn cells(&self) -> Result<Vec<CellSpec>> {
        self.validate()?;
        let tests: Vec<TestKind> = if self.experiment.is_first_order() {
            self.methods.iter().map(|&m| m.into()).collect()
        } else {
            vec![TestKind::SecondOrder]
        };
        let mut out = Vec::new();
        for &manifold in &self.manifolds {
            let model = self.experiment.model(manifold)?;
            for &test in &tests {
                for &t in &self.t_values {
                    for &tau in &self.tau_grid {
                        out.push(CellSpec {
                            experiment: self.experiment,
                            manifold,
                            model,
                            test,
                            t,
                            tau,
                            n_policy: self.block_policy,
                            replicates: self.replicates,
                            bootstrap_b: self.bootstrap_b,
                            alpha: self.alpha,
                            seed: self.seed,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Runs `f(r)` for `r = 0..replicates` and returns the rejection count and
/// the p-values in replicate order.
pub fn run_replicates<F>(replicates: usize, exec: Execution, f: F) -> Result<(usize, Vec<f64>)>
where
    F: Fn(usize) -> Result<(bool, f64)> + Sync + Send,
{
    let outcomes = try_map_indexed(replicates, exec, f)?;
    let rejections = outcomes.iter().filter(|o| o.0).count();
    Ok((rejections, outcomes.into_iter().map(|o| o.1).collect()))
}

pub fn simulation_seed(cell_seed: u64, replicate: usize) -> u64 {
    derive_seed(cell_seed, replicate as u64)
}

pub fn bootstrap_seed(cell_seed: u64, replicate: usize) -> u64 {
    derive_seed(simulation_seed(cell_seed, replicate), BOOTSTRAP_LABEL)
}

/// One replicate: `(reject, p-value)`. The test itself runs sequentially;
/// parallelism lives at the replicate level.
pub fn run_replicate(cell: &CellSpec, r: usize) -> Result<(bool, f64)> {
    let spec = SimSpec::new(cell.model, cell.tau, cell.t, simulation_seed(cell.seed, r));
    let series = simulate(&spec)?;
    let block_n = cell.n_policy.block_n(cell.t);
    match cell.test.method() {
        Some(method) => {
            let cfg = FirstOrderConfig {
                bootstrap_b: cell.bootstrap_b,
                block_n,
                seed: bootstrap_seed(cell.seed, r),
                method,
                alpha: cell.alpha,
                exec: Execution::Sequential,
                ..Default::default()
            };
            let rep = first_order_test(&series, &cfg)?;
            Ok((rep.reject, rep.p_value))
        }
        None => {
            let n = block_n.ok_or_else(|| {
                CliError::Input("the second-order test needs a fixed block size, not mv".into())
            })?;
            let mut cfg = SecondOrderConfig::new(n);
            cfg.alpha = cell.alpha;
            cfg.exec = Execution::Sequential;
            let rep = second_order_test(&series, &cfg)?;
            Ok((rep.reject, rep.p_value))
        }
    }
}

pub fn run_cell(cell: &CellSpec, exec: Execution) -> Result<CellResult> {
    let (rejections, p_values) = run_replicates(cell.replicates, exec, |r| run_replicate(cell, r))?;
    let rate = rejections as f64 / cell.replicates as f64;
    Ok(CellResult {
        spec: *cell,
        rejections,
        reject_rate: rate,
        stderr: (rate * (1.0 - rate) / cell.replicates as f64).sqrt(),
        p_values,
    })
}

/// Runs every cell, handing each result and its wall-clock seconds to `sink`
/// as soon as it is done. Timings are kept apart from the results, which are
/// reproducible bit for bit.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    exec: Execution,
    mut sink: impl FnMut(&CellResult, f64) -> Result<()>,
) -> Result<(Vec<CellResult>, Vec<f64>)> {
    let mut results = Vec::new();
    let mut seconds = Vec::new();
    for cell in cfg.cells()? {
        let start = Instant::now();
        let res = run_cell(&cell, exec)?;
        let secs = start.elapsed().as_secs_f64();
        sink(&res, secs)?;
        results.push(res);
        seconds.push(secs);
    }
    Ok((results, seconds))
}

pub const CSV_HEADER: [&str; 12] = [
    "experiment",
    "manifold",
    "method",
    "T",
    "tau",
    "n_policy",
    "replicates",
    "reject_rate",
    "stderr",
    "seed",
    "bootstrap_b",
    "alpha",
];

pub fn csv_record(r: &CellResult) -> Vec<String> {
    let s = &r.spec;
    let manifold = serde_json::to_value(s.manifold)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    vec![
        s.experiment.name().into(),
        manifold,
        s.test.name().into(),
        s.t.to_string(),
        s.tau.to_string(),
        s.n_policy.to_string(),
        s.replicates.to_string(),
        r.reject_rate.to_string(),
        r.stderr.to_string(),
        s.seed.to_string(),
        s.bootstrap_b.to_string(),
        s.alpha.to_string(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_policy_parses_and_prints() {
        for (text, p) in [
            ("mv", BlockPolicy::MinVolatility),
            ("8", BlockPolicy::Fixed(8)),
            ("T/8", BlockPolicy::Fraction(8)),
        ] {
            assert_eq!(text.parse::<BlockPolicy>().unwrap(), p);
            assert_eq!(p.to_string(), text);
        }
        assert!("T/0".parse::<BlockPolicy>().is_err());
        assert!("eight".parse::<BlockPolicy>().is_err());
        assert_eq!(BlockPolicy::Fraction(8).block_n(1024), Some(128));
    }

    #[test]
    fn default_grids() {
        let t1 = ExperimentConfig::new(ExperimentKind::Table1).cells().unwrap();
        assert_eq!(t1.len(), 2 * 3 * 3);
        assert_eq!(t1[0].model, Model::M1);
        assert_eq!(t1[0].test, TestKind::Camb);
        assert_eq!(t1.last().unwrap().model, Model::M2);
        let t2 = ExperimentConfig::new(ExperimentKind::Table2).cells().unwrap();
        assert_eq!(t2.len(), 9);
        assert!(t2.iter().any(|c| c.model == Model::EuclideanAr));
        assert!(t2.iter().all(|c| c.n_policy == BlockPolicy::Fraction(8)));
        let ps = ExperimentConfig::new(ExperimentKind::PowerSecond).cells().unwrap();
        assert_eq!(ps.len(), 2 * 6);
    }

    #[test]
    fn euclidean_first_order_is_rejected() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Table1);
        cfg.manifolds = vec![ManifoldKind::Euclidean];
        assert!(cfg.cells().is_err());
    }

    #[test]
    fn invalid_configs() {
        let base = ExperimentConfig::new(ExperimentKind::PowerFirst);
        let mut c = base.clone();
        c.replicates = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.tau_grid = vec![-1.0];
        assert!(c.validate().is_err());
        let mut c = base;
        c.alpha = 1.0;
        assert!(c.validate().is_err());
    }

    fn small_cell(test: TestKind) -> CellSpec {
        let mut cfg = ExperimentConfig::new(if test == TestKind::SecondOrder {
            ExperimentKind::Table2
        } else {
            ExperimentKind::Table1
        });
        cfg.replicates = 12;
        cfg.bootstrap_b = 50;
        cfg.t_values = vec![64];
        cfg.seed = 3;
        cfg.cells().unwrap().into_iter().find(|c| c.test == test).unwrap()
    }

    #[test]
    fn cells_are_deterministic_across_execution() {
        for test in [TestKind::Camb, TestKind::SecondOrder] {
            let cell = small_cell(test);
            let a = run_cell(&cell, Execution::Sequential).unwrap();
            let b = run_cell(&cell, Execution::Parallel).unwrap();
            assert_eq!(a.p_values, b.p_values);
            assert_eq!(a.rejections, b.rejections);
            assert!(a.p_values.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn replicate_seeds_are_independent_of_grid() {
        let cell = small_cell(TestKind::B1);
        let full = run_cell(&cell, Execution::Sequential).unwrap();
        assert_eq!(run_replicate(&cell, 5).unwrap().1, full.p_values[5]);
        assert_ne!(simulation_seed(3, 0), simulation_seed(3, 1));
        assert_ne!(simulation_seed(3, 0), bootstrap_seed(3, 0));
    }

    #[test]
    fn mv_policy_is_rejected_for_second_order() {
        let mut cell = small_cell(TestKind::SecondOrder);
        cell.n_policy = BlockPolicy::MinVolatility;
        assert!(run_replicate(&cell, 0).is_err());
    }

    #[test]
    fn csv_record_matches_header() {
        let cell = small_cell(TestKind::SecondOrder);
        let r = run_cell(&cell, Execution::Sequential).unwrap();
        let rec = csv_record(&r);
        assert_eq!(rec.len(), CSV_HEADER.len());
        assert_eq!(&rec[..6], &["table2", "sphere", "second-order", "64", "0", "T/8"]);
    }
}
