//! Argument parsing and command dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mstat_core::first_order::{first_order_test, FirstOrderConfig, Method};
use mstat_core::second_order::{second_order_test, Detrend, SecondOrderConfig};
use mstat_core::simulate::{simulate, Model, SimSpec};
use mstat_core::{Execution, ManifoldKind};
use serde_json::json;

use crate::config::{ConfigFile, PolicyValue};
use crate::error::{exit, CliError, Result};
use crate::experiment::{csv_record, run_experiment, CSV_HEADER};
use crate::ingest::{ingest, manifest_path, write_series, DatasetKind, IngestOptions, Manifest};
use crate::report::{DatasetInfo, FirstOrderResult, ReportFile, SecondOrderResult};

#[derive(Debug, Parser)]
#[command(name = "mstat", version, about = "Stationarity tests for manifold-valued time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a stationarity test on a CSV dataset.
    Test {
        #[command(subcommand)]
        which: TestCommand,
    },
    /// Simulate one of the benchmark models and write it as CSV.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo grid and write per-cell rejection rates.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Subcommand)]
pub enum TestCommand {
    /// CUSUM test of a constant intrinsic mean.
    FirstOrder(FirstOrderArgs),
    /// Spectral test of a time-invariant second-order structure.
    SecondOrder(SecondOrderArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ManifoldArg {
    Sphere,
    Spd,
    Euclidean,
}

impl From<ManifoldArg> for ManifoldKind {
    fn from(m: ManifoldArg) -> Self {
        match m {
            ManifoldArg::Sphere => ManifoldKind::Sphere,
            ManifoldArg::Spd => ManifoldKind::Spd,
            ManifoldArg::Euclidean => ManifoldKind::Euclidean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Camb,
    B1,
    B2,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Camb => Method::Camb,
            MethodArg::B1 => Method::B1,
            MethodArg::B2 => Method::B2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetrendArg {
    None,
    BlockFrechet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    M1,
    M2,
    M3Sphere,
    M3Spd,
    EuclideanAr,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::M1 => Model::M1,
            ModelArg::M2 => Model::M2,
            ModelArg::M3Sphere => Model::M3Sphere,
            ModelArg::M3Spd => Model::M3Spd,
            ModelArg::EuclideanAr => Model::EuclideanAr,
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file, one row per time point, with a header row.
    pub path: PathBuf,
    /// Manifold kind; overrides the manifest sidecar.
    #[arg(long, value_enum)]
    pub manifold: Option<ManifoldArg>,
    /// Number of CSV columns: ambient coordinates, or n(n+1)/2 for SPD.
    #[arg(long)]
    pub ambient_dim: Option<usize>,
    /// Rows are proportions; apply the square-root map onto the sphere.
    #[arg(long)]
    pub compositional: bool,
}

impl DataArgs {
    fn load(&self) -> Result<(mstat_core::ManifoldSeries, DatasetInfo)> {
        let opts = IngestOptions {
            manifold: self.manifold.map(Into::into),
            ambient_dim: self.ambient_dim,
            compositional: self.compositional,
        };
        let (series, kind) = ingest(&self.path, &opts)?;
        let info = DatasetInfo {
            path: self.path.display().to_string(),
            kind,
            compositional: self.compositional,
            t: series.len(),
        };
        Ok((series, info))
    }
}

#[derive(Debug, Args)]
pub struct FirstOrderArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "camb")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 2000)]
    pub bootstrap_b: usize,
    /// Block size; chosen by minimum volatility when absent.
    #[arg(long)]
    pub block_n: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially. Defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SecondOrderArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 8)]
    pub block_n: usize,
    /// Explicit 1-based block starts, comma separated; may overlap.
    #[arg(long, value_delimiter = ',')]
    pub blocks: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "none")]
    pub detrend: DetrendArg,
    /// Smoother window for block-frechet detrending (default T/5).
    #[arg(long)]
    pub bandwidth: Option<usize>,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially. Defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    #[arg(long = "T")]
    pub t: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub burn_in: usize,
    /// CSV path (a manifest sidecar is written next to it); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// table1, table2, power-first or power-second.
    #[arg(long)]
    pub experiment: Option<String>,
    /// Flat TOML file with the same keys; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Series lengths, comma separated.
    #[arg(long = "T", value_delimiter = ',')]
    pub t: Option<Vec<usize>>,
    /// τ grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub tau: Option<Vec<f64>>,
    #[arg(long)]
    pub bootstrap_b: Option<usize>,
    /// Block policy: mv, a fixed size, or T/<k>.
    #[arg(long)]
    pub block_n: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Restrict to one manifold.
    #[arg(long, value_enum)]
    pub manifold: Option<ManifoldArg>,
    /// Restrict to one first-order method.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Worker threads; 1 runs sequentially. Defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// CSV path; the JSON report goes next to it with a .json extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return exit::OK;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(first.to_string()).line());
            return exit::USAGE;
        }
    };
    match run(cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Test {
            which: TestCommand::FirstOrder(a),
        } => with_threads(a.threads, |exec| first_order(&a, exec)),
        Command::Test {
            which: TestCommand::SecondOrder(a),
        } => with_threads(a.threads, |exec| second_order(&a, exec)),
        Command::Simulate(a) => simulate_cmd(&a),
        Command::Experiment(a) => experiment(a),
    }
}

/// Runs `f` on a pool of `threads` workers (the global pool when absent).
/// One thread means the sequential code path.
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce(Execution) -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(1) => f(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?
            .install(|| f(Execution::Parallel)),
        _ => f(Execution::Parallel),
    }
}

fn first_order(a: &FirstOrderArgs, exec: Execution) -> Result<()> {
    let start = Instant::now();
    let (series, dataset) = a.data.load()?;
    let cfg = FirstOrderConfig {
        bootstrap_b: a.bootstrap_b,
        block_n: a.block_n,
        seed: a.seed,
        method: a.method.into(),
        alpha: a.alpha,
        exec,
        ..Default::default()
    };
    let test = first_order_test(&series, &cfg)?;
    let inputs = json!({
        "path": dataset.path,
        "method": cfg.method,
        "bootstrap_b": a.bootstrap_b,
        "block_n": a.block_n,
        "alpha": a.alpha,
        "seed": a.seed,
    });
    let result = FirstOrderResult { dataset, test };
    ReportFile::new("test first-order", inputs, a.seed, result, start.elapsed().as_secs_f64()).write(a.out.as_deref())
}

fn second_order(a: &SecondOrderArgs, exec: Execution) -> Result<()> {
    let start = Instant::now();
    if a.bandwidth.is_some() && a.detrend == DetrendArg::None {
        return Err(CliError::Usage("--bandwidth needs --detrend block-frechet".into()));
    }
    let (series, dataset) = a.data.load()?;
    let mut cfg = SecondOrderConfig::new(a.block_n);
    cfg.block_starts = a.blocks.clone();
    cfg.alpha = a.alpha;
    cfg.exec = exec;
    cfg.detrend = match a.detrend {
        DetrendArg::None => Detrend::None,
        DetrendArg::BlockFrechet => Detrend::BlockFrechet { bandwidth: a.bandwidth },
    };
    let test = second_order_test(&series, &cfg)?;
    let inputs = json!({
        "path": dataset.path,
        "block_n": a.block_n,
        "blocks": a.blocks,
        "alpha": a.alpha,
        "detrend": cfg.detrend,
    });
    let result = SecondOrderResult { dataset, test };
    ReportFile::new("test second-order", inputs, 0, result, start.elapsed().as_secs_f64()).write(a.out.as_deref())
}

fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let spec = SimSpec {
        burn_in: a.burn_in,
        ..SimSpec::new(a.model.into(), a.tau, a.t, a.seed)
    };
    let series = simulate(&spec)?;
    match &a.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| CliError::io(path.display(), e))?;
            write_series(&series, std::io::BufWriter::new(file))?;
            write_manifest(path, DatasetKind::of(series.manifold()))
        }
        None => write_series(&series, std::io::stdout().lock()),
    }
}

fn write_manifest(path: &Path, kind: DatasetKind) -> Result<()> {
    let m = Manifest {
        manifold: Some(kind.manifold),
        ambient_dim: Some(kind.ambient_dim),
        compositional: None,
    };
    let mp = manifest_path(path);
    let text = toml::to_string(&m).map_err(|e| CliError::Input(e.to_string()))?;
    std::fs::write(&mp, text).map_err(|e| CliError::io(mp.display(), e))
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let start = Instant::now();
    let file = match &a.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let flags = ConfigFile {
        experiment: a.experiment,
        replicates: a.replicates,
        t_values: a.t,
        tau_grid: a.tau,
        bootstrap_b: a.bootstrap_b,
        block_n: a.block_n.map(PolicyValue::Text),
        alpha: a.alpha,
        seed: a.seed,
        manifold: a.manifold.map(Into::into),
        method: a.method.map(Into::into),
        threads: a.threads,
        out: a.out,
    };
    let merged = file.overlay(flags);
    let cfg = merged.resolve()?;
    let out = merged.out.clone();

    let sink: Box<dyn Write + Send> = match &out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| CliError::io(p.display(), e))?),
        None => Box::new(std::io::stdout()),
    };
    let out_name = out.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "stdout".into());
    let mut w = csv::Writer::from_writer(sink);
    let io_err = |e: csv::Error| CliError::io(&out_name, std::io::Error::other(e.to_string()));
    w.write_record(CSV_HEADER).map_err(io_err)?;
    w.flush().map_err(|e| CliError::io(&out_name, e))?;

    let (results, seconds) = with_threads(merged.threads, |exec| {
        run_experiment(&cfg, exec, |cell, _| {
            // flushed per cell so an interrupted run keeps what it finished
            w.write_record(csv_record(cell)).map_err(io_err)?;
            w.flush().map_err(|e| CliError::io(&out_name, e))
        })
    })?;

    if let Some(p) = &out {
        let mut report = ReportFile::new(
            "experiment",
            serde_json::to_value(&cfg).expect("config serializes"),
            cfg.seed,
            results,
            start.elapsed().as_secs_f64(),
        );
        report.timing.cell_seconds = seconds;
        report.write(Some(&p.with_extension("json")))?;
    }
    Ok(())
}
