//! Run manifests and all-or-nothing output writing.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::Command;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Arguments with input paths made absolute; enough to run again.
    pub invocation: Command,
    /// sha256 of every file read, keyed by absolute path.
    pub inputs: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub tolerances: BTreeMap<String, f64>,
    pub horizon: Option<f64>,
    pub timestamp: String,
    /// sha256 of every file written next to the manifest.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(invocation: &Command) -> Self {
        Self {
            command: invocation.name().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            invocation: invocation.clone(),
            inputs: BTreeMap::new(),
            seeds: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            horizon: None,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            outputs: BTreeMap::new(),
        }
    }

    /// Reads `path` and records its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
        self.inputs
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| CliError::parse(format!("manifest {}: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Absolute form of a path given on the command line.
pub fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    fs::canonicalize(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))
}

/// Files produced by a command, held in memory until the command succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_json<T: Serialize>(
        &mut self,
        name: impl Into<String>,
        value: &T,
    ) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    /// Writes every file through a temporary sibling and a rename, then the
    /// manifest listing their digests.
    pub fn commit(self, dir: &Path, mut manifest: RunManifest) -> Result<RunManifest, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            manifest.outputs.insert(name.clone(), sha256_hex(bytes));
            staged.push((name, stage(dir, bytes)?));
        }
        for (name, tmp) in staged {
            persist(tmp, &dir.join(name))?;
        }
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        persist(stage(dir, &bytes)?, &dir.join(MANIFEST_FILE))?;
        Ok(manifest)
    }
}

fn stage(dir: &Path, bytes: &[u8]) -> Result<tempfile::NamedTempFile, CliError> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::io(format!("cannot write into {}: {e}", dir.display())))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    Ok(tmp)
}

fn persist(tmp: tempfile::NamedTempFile, target: &Path) -> Result<(), CliError> {
    tmp.persist(target)
        .map(|_| ())
        .map_err(|e| CliError::io(format!("cannot write {}: {}", target.display(), e.error)))
}
