use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Provenance of one artifact-producing command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config_fingerprint: Option<String>,
    pub corpus_checksum: Option<String>,
    pub seeds: Vec<u64>,
    pub versions: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    /// Output path (relative to the manifest) to SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Collects output files while a command runs.
pub struct ManifestBuilder {
    command: String,
    started: Instant,
    pub config_fingerprint: Option<String>,
    pub corpus_checksum: Option<String>,
    pub seeds: Vec<u64>,
    outputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            started: Instant::now(),
            config_fingerprint: None,
            corpus_checksum: None,
            seeds: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Writes `bytes` to `path` and records it.
    pub fn write(&mut self, path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, bytes)?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    /// Records a file written by someone else.
    pub fn record(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Hashes every output and writes the manifest to `path`.
    pub fn finish(self, path: &Path) -> Result<RunManifest, CliError> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut outputs = BTreeMap::new();
        for p in &self.outputs {
            let key = p.strip_prefix(base).unwrap_or(p).to_string_lossy().replace('\\', "/");
            outputs.insert(key, sha256_file(p)?);
        }
        let mut versions = BTreeMap::new();
        versions.insert("walklab".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert(
            "observation_width".to_string(),
            walklab::worldsim::OBSERVATION_WIDTH.to_string(),
        );
        let manifest = RunManifest {
            command: self.command,
            argv: std::env::args().collect(),
            config_fingerprint: self.config_fingerprint,
            corpus_checksum: self.corpus_checksum,
            seeds: self.seeds,
            versions,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            outputs,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(manifest)
    }
}

/// `report.json` gets `report.json.manifest.json`.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}
