//! Flat TOML configuration for `experiment`. Keys mirror the flags; a flag
//! given on the command line always wins over the file.
//!
//! ```toml
//! experiment = "table1"
//! replicates = 500
//! t_values = [50, 100, 500]
//! tau_grid = [0.0]
//! bootstrap_b = 500
//! block_n = "mv"
//! alpha = 0.05
//! seed = 1
//! manifold = "sphere"
//! method = "camb"
//! threads = 4
//! out = "table1.csv"
//! ```

use std::path::{Path, PathBuf};

use mstat_core::first_order::Method;
use mstat_core::ManifoldKind;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::experiment::{BlockPolicy, ExperimentConfig, ExperimentKind};

/// `block_n` may be written as an integer or as a policy string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicyValue {
    Size(usize),
    Text(String),
}

impl PolicyValue {
    fn resolve(&self) -> Result<BlockPolicy> {
        match self {
            PolicyValue::Size(n) => format!("{n}").parse(),
            PolicyValue::Text(s) => s.parse(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<String>,
    pub replicates: Option<usize>,
    pub t_values: Option<Vec<usize>>,
    pub tau_grid: Option<Vec<f64>>,
    pub bootstrap_b: Option<usize>,
    pub block_n: Option<PolicyValue>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub manifold: Option<ManifoldKind>,
    pub method: Option<Method>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Input(format!("config: {}", e.message())))
    }

    /// Overlays `flags` on `self`; any field set in `flags` wins.
    pub fn overlay(self, flags: ConfigFile) -> ConfigFile {
        ConfigFile {
            experiment: flags.experiment.or(self.experiment),
            replicates: flags.replicates.or(self.replicates),
            t_values: flags.t_values.or(self.t_values),
            tau_grid: flags.tau_grid.or(self.tau_grid),
            bootstrap_b: flags.bootstrap_b.or(self.bootstrap_b),
            block_n: flags.block_n.or(self.block_n),
            alpha: flags.alpha.or(self.alpha),
            seed: flags.seed.or(self.seed),
            manifold: flags.manifold.or(self.manifold),
            method: flags.method.or(self.method),
            threads: flags.threads.or(self.threads),
            out: flags.out.or(self.out),
        }
    }

    /// Fills unset fields from the experiment's defaults.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let kind: ExperimentKind = self
            .experiment
            .as_deref()
            .ok_or_else(|| CliError::Usage("no experiment given (--experiment or config key)".into()))?
            .parse()?;
        let mut cfg = ExperimentConfig::new(kind);
        if let Some(v) = self.replicates {
            cfg.replicates = v;
        }
        if let Some(v) = &self.t_values {
            cfg.t_values = v.clone();
        }
        if let Some(v) = &self.tau_grid {
            cfg.tau_grid = v.clone();
        }
        if let Some(v) = self.bootstrap_b {
            cfg.bootstrap_b = v;
        }
        if let Some(v) = &self.block_n {
            cfg.block_policy = v.resolve()?;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(m) = self.manifold {
            cfg.manifolds = vec![m];
        }
        if let Some(m) = self.method {
            if !kind.is_first_order() {
                return Err(CliError::Usage(format!(
                    "--method applies to first-order experiments, not {}",
                    kind.name()
                )));
            }
            cfg.methods = vec![m];
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
