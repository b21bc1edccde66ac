//! Run records: what was run, on which inputs, and what it wrote.

use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::output::sha256_hex;
use crate::{CliError, SCHEMA_VERSION};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub path: PathBuf,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub command: String,
    /// Everything that determines the outputs: parsed arguments, the
    /// resolved series controls and any config file contents.
    pub config: serde_json::Value,
    /// SHA-256 of `"blob <len>\0"` followed by the canonical JSON of `config`.
    pub input_hash: String,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputEntry>,
}

/// Git-style object hash of a byte payload.
pub fn blob_hash(payload: &[u8]) -> String {
    let mut bytes = format!("blob {}\0", payload.len()).into_bytes();
    bytes.extend_from_slice(payload);
    sha256_hex(&bytes)
}

impl RunRecord {
    pub fn new(
        command: &str,
        config: serde_json::Value,
        wall: Duration,
        outputs: Vec<OutputEntry>,
    ) -> Self {
        // serde_json's default map is ordered by key, so this is canonical.
        let canonical = serde_json::to_vec(&config).expect("json values serialize");
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            input_hash: blob_hash(&canonical),
            config,
            wall_time_s: wall.as_secs_f64(),
            outputs,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("record serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }
}

/// Writes `contents` to `path` and returns its manifest entry.
pub fn write_output(path: &Path, contents: &[u8]) -> Result<OutputEntry, CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))?;
    Ok(OutputEntry {
        path: path.to_path_buf(),
        bytes: contents.len(),
        sha256: sha256_hex(contents),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git() {
        // `printf 'hello\n' | git hash-object --stdin` under SHA-256 object format
        assert_eq!(
            blob_hash(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }

    #[test]
    fn input_hash_depends_only_on_config() {
        let cfg = serde_json::json!({ "b": 1, "a": [0.5, 2] });
        let a = RunRecord::new("x", cfg.clone(), Duration::from_secs(1), vec![]);
        let b = RunRecord::new("x", cfg, Duration::from_secs(9), vec![]);
        assert_eq!(a.input_hash, b.input_hash);
    }
}
