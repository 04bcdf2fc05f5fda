use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_COPY: &str = "config.json";

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    tool_version: &'a str,
    config_hash: String,
    seed: u64,
    started_unix: u64,
    finished_unix: u64,
    files: Vec<FileEntry>,
}

/// Output directory that remembers everything written into it.
pub struct RunDir {
    root: PathBuf,
    files: Vec<String>,
    command: &'static str,
    config_json: String,
    seed: u64,
    started: u64,
}

impl RunDir {
    /// Creates the directory and writes the resolved config copy.
    pub fn create(root: &Path, command: &'static str, cfg: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let config_json = serde_json::to_string_pretty(cfg).expect("config serializes") + "\n";
        let mut dir = Self {
            root: root.to_path_buf(),
            files: Vec::new(),
            command,
            config_json: config_json.clone(),
            seed: cfg.seed,
            started: unix_now(),
        };
        dir.write(CONFIG_COPY, config_json)?;
        Ok(dir)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&p, contents).map_err(|e| CliError::io(&p, e))?;
        self.record(name);
        Ok(())
    }

    /// Registers a file written by library code.
    pub fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.files.sort();
        let files = self
            .files
            .iter()
            .map(|name| {
                let p = self.path(name);
                let bytes = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
                Ok(FileEntry {
                    path: name.clone(),
                    bytes: bytes.len() as u64,
                    sha256: hex(&bytes),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let manifest = Manifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION"),
            config_hash: hex(self.config_json.as_bytes()),
            seed: self.seed,
            started_unix: self.started,
            finished_unix: unix_now(),
            files,
        };
        let p = self.path(MANIFEST);
        fs::write(&p, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")
            .map_err(|e| CliError::io(&p, e))
    }
}
