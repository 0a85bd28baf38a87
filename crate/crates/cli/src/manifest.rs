//! Run manifests: one JSON file next to each command's outputs recording
//! what ran, on which inputs, and what came out.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name; rerunning them reproduces the outputs.
    pub argv: Vec<String>,
    /// SHA-256 of the resolved command configuration.
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Tool version plus a digest over every output.
    pub artifact_version: String,
    pub wall_time_ms: u64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn digests(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.clone(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// Collects manifest fields while a command runs.
pub struct Recorder {
    command: String,
    config: serde_json::Value,
    seed: u64,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl Recorder {
    pub fn new(command: &str, config: impl Serialize, seed: u64) -> Self {
        Recorder {
            command: command.to_string(),
            config: serde_json::to_value(config).expect("config serializes"),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Writes the manifest to `path` and returns it.
    pub fn finish(self, path: &Path) -> Result<RunManifest> {
        let outputs = digests(&self.outputs)?;
        let mut all = Sha256::new();
        for o in &outputs {
            all.update(o.sha256.as_bytes());
        }
        let manifest = RunManifest {
            argv: std::env::args().skip(1).collect(),
            config_hash: hex::encode(Sha256::digest(self.config.to_string().as_bytes())),
            config: self.config,
            command: self.command,
            seeds: [("seed".to_string(), self.seed)].into(),
            inputs: digests(&self.inputs)?,
            artifact_version: format!("odr-{}+{}", env!("CARGO_PKG_VERSION"), &hex::encode(all.finalize())[..12]),
            outputs,
            wall_time_ms: self.started.elapsed().as_millis() as u64,
        };
        let mut body = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        body.push(b'\n');
        fs::write(path, body).map_err(|e| CliError::io(path, e))?;
        Ok(manifest)
    }
}

/// `dir/name.json` becomes `dir/name.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("out/model.json"), "manifest.json"), PathBuf::from("out/model.manifest.json"));
        assert_eq!(sibling(Path::new("corpus.jsonl"), "rules.json"), PathBuf::from("corpus.rules.json"));
    }
}
