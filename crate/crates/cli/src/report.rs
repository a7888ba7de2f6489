//! Versioned JSON reports.
//!
//! Everything except `timing` is a deterministic function of the inputs, so
//! two runs with the same configuration differ only in that field.

use std::io::Write;
use std::path::Path;

use mstat_core::first_order::FirstOrderReport;
use mstat_core::second_order::SecondOrderReport;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::ingest::DatasetKind;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        ToolInfo {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_seconds: f64,
    /// Per-cell wall-clock for experiment reports.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cell_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile<T> {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub command: String,
    /// Resolved inputs, after merging config file and flags.
    pub inputs: serde_json::Value,
    pub seed: u64,
    pub result: T,
    pub timing: Timing,
}

impl<T: Serialize> ReportFile<T> {
    pub fn new(command: &str, inputs: serde_json::Value, seed: u64, result: T, seconds: f64) -> Self {
        ReportFile {
            schema_version: SCHEMA_VERSION,
            tool: ToolInfo::current(),
            command: command.into(),
            inputs,
            seed,
            result,
            timing: Timing {
                wall_clock_seconds: seconds,
                cell_seconds: Vec::new(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report types serialize")
    }

    /// Writes to `out`, or to stdout when absent.
    pub fn write(&self, out: Option<&Path>) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        match out {
            Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p.display(), e)),
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::io("stdout", e)),
        }
    }
}

/// Where the series came from and how it was read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub path: String,
    pub kind: DatasetKind,
    pub compositional: bool,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderResult {
    pub dataset: DatasetInfo,
    pub test: FirstOrderReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderResult {
    pub dataset: DatasetInfo,
    pub test: SecondOrderReport,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_fields() {
        let r = ReportFile::new("demo", serde_json::json!({"a": 1}), 7, vec![1.5, 2.0], 0.25);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert_eq!(v["tool"]["name"], "mstat");
        assert_eq!(v["seed"], 7);
        assert_eq!(v["result"][1], 2.0);
        assert_eq!(v["timing"]["wall_clock_seconds"], 0.25);
        let back: ReportFile<Vec<f64>> = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
