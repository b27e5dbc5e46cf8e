//! Append-only run manifests.
//!
//! Each output directory has one `manifest.jsonl`. Every command that writes
//! into the directory appends one JSON object per line recording the
//! command, the tool version, the master seed, a snapshot of the resolved
//! configuration and the artifacts it produced.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    /// Resolved configuration as `key -> value` text.
    pub config: BTreeMap<String, String>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn now_unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl RunManifest {
    /// Starts a record; `config_text` is in the `key = value` format.
    pub fn begin(command: &str, seed: u64, config_text: &str) -> Self {
        let config = config_text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            artifacts: Vec::new(),
            started_unix_ms: now_unix_ms(),
            finished_unix_ms: 0,
        }
    }

    /// Records every file under `dir` (except the manifest itself).
    pub fn collect_artifacts(&mut self, dir: &Path) -> Result<()> {
        let mut found = Vec::new();
        let mut stack: Vec<PathBuf> = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
                let path = entry.map_err(|e| Error::io(&d, e))?.path();
                if path.is_dir() {
                    stack.push(path);
                } else if path.file_name().is_some_and(|n| n != MANIFEST_FILE) {
                    let rel = path.strip_prefix(dir).unwrap_or(&path);
                    found.push(rel.to_string_lossy().replace('\\', "/"));
                }
            }
        }
        found.sort();
        self.artifacts = found;
        Ok(())
    }

    /// Stamps the finish time and appends the record to `dir/manifest.jsonl`.
    pub fn append(mut self, dir: &Path) -> Result<()> {
        self.finished_unix_ms = now_unix_ms();
        let path = dir.join(MANIFEST_FILE);
        let line = serde_json::to_string(&self).map_err(|e| Error::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(file, "{line}").map_err(|e| Error::io(&path, e))
    }
}

/// Every record in a manifest, oldest first.
pub fn read_manifest(dir: &Path) -> Result<Vec<RunManifest>> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Format {
                path: path.clone(),
                message: e.to_string(),
            })
        })
        .collect()
}
