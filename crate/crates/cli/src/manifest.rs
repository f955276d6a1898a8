//! Run manifests: one JSON file per output directory recording everything
//! needed to reproduce the directory's contents.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use cfik::world::WorldSetManifest;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Path as given for inputs, relative to the output directory for outputs.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    /// False for files that carry wall-clock measurements.
    pub deterministic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub subcommand: String,
    /// Command line after the program name, without `--out`.
    pub args: Vec<String>,
    /// Effective configuration, including defaults.
    pub config: crate::config::Config,
    pub seeds: Vec<u64>,
    pub code_version: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<OutputFile>,
    pub started_unix: f64,
    pub finished_unix: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world_set: Option<WorldSetManifest>,
    /// Command-specific summary, such as timings.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub summary: serde_json::Value,
}

pub fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let m: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            bail!("manifest schema version {} is not supported", m.schema_version);
        }
        Ok(m)
    }
}

/// An output directory that records every file written into it.
pub struct OutDir {
    pub root: PathBuf,
    outputs: Vec<OutputFile>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        if root.join(MANIFEST_FILE).exists() {
            bail!("{} already holds a run manifest", root.display());
        }
        Ok(OutDir {
            root: root.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8], deterministic: bool) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.record(name, deterministic)
    }

    /// Record a file that a library call already wrote.
    pub fn record(&mut self, name: &str, deterministic: bool) -> Result<()> {
        let sha256 = file_digest(&self.path(name))?;
        self.outputs.retain(|o| o.path != name);
        self.outputs.push(OutputFile {
            path: name.to_string(),
            sha256,
            deterministic,
        });
        Ok(())
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<RunManifest> {
        manifest.outputs = self.outputs;
        manifest.finished_unix = now_unix();
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.root.join(MANIFEST_FILE), text)?;
        Ok(manifest)
    }
}
