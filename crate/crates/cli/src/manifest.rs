//! Run manifests and atomic output writing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use precondforge_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

pub const PARTIAL_SUFFIX: &str = ".partial";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(sha256_hex(&bytes))
}

/// Writes `path.partial`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let origin = path.display().to_string();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    let mut partial = path.as_os_str().to_owned();
    partial.push(PARTIAL_SUFFIX);
    let partial = PathBuf::from(partial);
    std::fs::write(&partial, bytes).map_err(|e| Error::io(partial.display().to_string(), e))?;
    std::fs::rename(&partial, path).map_err(|e| Error::io(&origin, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub cwd: PathBuf,
    pub config_hash: String,
    /// Fully resolved configuration, after environment and flag overrides.
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            location: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn config(&self) -> Result<PipelineConfig> {
        serde_json::from_value(self.config.clone()).map_err(|e| Error::Config(format!("manifest config: {e}")))
    }
}

/// Tracks what a command reads and writes. Outputs can be redirected into a
/// scratch directory for replay; digests stay keyed by the logical path.
#[derive(Debug, Default)]
pub struct RunContext {
    redirect: Option<PathBuf>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    primary: Option<PathBuf>,
}

impl RunContext {
    pub fn new(redirect: Option<PathBuf>) -> Self {
        RunContext { redirect, ..Default::default() }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn physical(&self, logical: &Path) -> PathBuf {
        match &self.redirect {
            Some(dir) => dir.join(logical.file_name().unwrap_or(logical.as_os_str())),
            None => logical.to_path_buf(),
        }
    }

    pub fn write(&mut self, logical: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.physical(logical), bytes)?;
        self.outputs.insert(logical.display().to_string(), sha256_hex(bytes));
        self.primary.get_or_insert_with(|| logical.to_path_buf());
        Ok(())
    }

    pub fn outputs(&self) -> &BTreeMap<String, String> {
        &self.outputs
    }

    /// Default manifest location: next to the first output.
    pub fn default_manifest_path(&self) -> Option<PathBuf> {
        self.primary.as_ref().map(|p| {
            let mut s = p.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    }

    pub fn manifest(&self, command: &str, args: &[String], config: &PipelineConfig) -> Result<Manifest> {
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: args.to_vec(),
            cwd: std::env::current_dir().map_err(|e| Error::io(".", e))?,
            config_hash: sha256_hex(config.to_toml().as_bytes()),
            config: serde_json::to_value(config).expect("configuration serializes"),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
        })
    }
}
