use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::IoError;

/// Row accounting for one stage; `loaded = used + dropped`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: String,
    pub loaded: usize,
    pub used: usize,
    pub dropped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    /// SHA-256 of every file read, by file name.
    pub input_hashes: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    pub stages: Vec<StageCount>,
    pub warnings: Vec<String>,
    /// SHA-256 of every file written, by file name.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            input_hashes: BTreeMap::new(),
            wall_clock_seconds: 0.0,
            stages: Vec::new(),
            warnings: Vec::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn stage(&mut self, stage: impl Into<String>, loaded: usize, used: usize) {
        self.stages.push(StageCount {
            stage: stage.into(),
            loaded,
            used,
            dropped: loaded.saturating_sub(used),
        });
    }

    pub fn balanced(&self) -> bool {
        self.stages.iter().all(|s| s.loaded == s.used + s.dropped)
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), IoError> {
        self.input_hashes.insert(file_key(path), sha256_file(path)?);
        Ok(())
    }
}

pub fn file_key(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn sha256_file(path: &Path) -> Result<String, IoError> {
    let bytes = std::fs::read(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
