use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Result;

pub const RUNS_FILE: &str = "runs.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// One line of the append-only run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub command: String,
    pub started_at: String,
    pub config_hash: String,
    pub root_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn append(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir)?;
        let mut f = OpenOptions::new().create(true).append(true).open(out_dir.join(RUNS_FILE))?;
        let mut line = serde_json::to_vec(self)?;
        line.push(b'\n');
        f.write_all(&line)?;
        Ok(())
    }
}

pub fn read_runs(out_dir: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(out_dir.join(RUNS_FILE))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
