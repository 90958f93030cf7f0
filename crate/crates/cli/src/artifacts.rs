//! Output files: policy parameters, per-iteration metrics, summary tables
//! and the resolved configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chainttt_core::{IterationMetrics, PolicyParams, RunConfig};
use serde::Serialize;

use crate::config_file;
use crate::{CliError, Result};

pub const PARAMS_FILE: &str = "params.bin";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_FILE: &str = "config.toml";

/// Environment variable naming the directory under which runs without an
/// explicit `--out` are written.
pub const OUTPUT_ROOT_ENV: &str = "CHAINTTT_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "runs";

/// `explicit` if given, else `<root>/<run_name>` where the root comes from
/// [`OUTPUT_ROOT_ENV`] or defaults to `./runs`.
pub fn output_dir(explicit: Option<&Path>, run_name: &str) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUTPUT_ROOT_ENV)
            .map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT), PathBuf::from)
            .join(run_name),
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_params(path: &Path, params: &PolicyParams) -> Result<()> {
    std::fs::write(path, params.to_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn read_params(path: &Path) -> Result<PolicyParams> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    PolicyParams::from_bytes(&bytes)
        .map_err(|e| CliError::Runtime(format!("{}: {}", path.display(), e)))
}

pub fn write_config(path: &Path, config: &RunConfig) -> Result<()> {
    let text = config_file::to_toml(config)?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Line-per-record JSON log. Every record is flushed as it is written so a
/// run that fails midway leaves a complete prefix.
pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)
            .map_err(|e| CliError::Runtime(format!("{}: {}", self.path.display(), e)))?;
        self.out
            .write_all(b"\n")
            .and_then(|_| self.out.flush())
            .map_err(|e| CliError::io(&self.path, e))
    }
}

/// Metrics record tagged with the ablation variant and seed it came from.
#[derive(Debug, Serialize)]
pub struct TaggedMetrics<'a> {
    pub variant: &'a str,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: &'a IterationMetrics,
}

/// One row of `summary.csv`. Undefined numbers are left empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub variant: String,
    pub sr: Option<f64>,
    pub f1: Option<f64>,
    pub reward_calls: u64,
    /// Seeds joined with `;`.
    pub seeds: String,
    pub wall_time_s: f64,
}

impl SummaryRow {
    pub fn join_seeds(seeds: &[u64]) -> String {
        seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(";")
    }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Runtime(format!("{}: {}", path.display(), e)))?;
    if rows.is_empty() {
        w.write_record([
            "variant",
            "sr",
            "f1",
            "reward_calls",
            "seeds",
            "wall_time_s",
        ])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    for row in rows {
        w.serialize(row)
            .map_err(|e| CliError::Runtime(format!("{}: {}", path.display(), e)))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
