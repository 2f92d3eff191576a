use std::collections::BTreeMap;
use std::path::Path;

use mfgkit::{Params, SolveSettings};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where the environment came from: a registry name with keyword arguments,
/// or a tabular file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSource {
    pub name: String,
    #[serde(default)]
    pub kwargs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub name: String,
    pub params: Params,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub iteration: usize,
    pub exploitability: f64,
    pub elapsed_s: f64,
}

/// Everything needed to reproduce and plot a solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub environment: EnvSource,
    pub algorithm: AlgorithmSpec,
    pub settings: SolveSettings,
    pub series: Vec<SeriesPoint>,
    pub converged: bool,
    pub iterations_run: usize,
    /// Shape `(T+1, S..., A...)`.
    pub final_policy: Value,
}

impl RunRecord {
    pub fn exploitabilities(&self) -> Vec<f64> {
        self.series.iter().map(|p| p.exploitability).collect()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn read_run_record(path: &Path) -> CliResult<RunRecord> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let record: RunRecord = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: malformed run record: {e}", path.display())))?;
    if record.series.is_empty() {
        return Err(CliError::Data(format!("{}: iteration series is empty", path.display())));
    }
    Ok(record)
}
