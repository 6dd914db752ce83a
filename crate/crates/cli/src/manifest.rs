//! Run manifests written next to every output.

use crate::error::CliResult;
use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub tool_version: String,
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn hash_file(path: &Path) -> CliResult<FileHash> {
    let bytes = std::fs::read(path)?;
    Ok(FileHash {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Collects paths while a command runs, then writes the manifest.
pub struct Recorder {
    command: String,
    started_at: String,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            started_at: now(),
            config: None,
            seed: None,
            inputs: vec![],
            outputs: vec![],
        }
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    pub fn write(self, path: &Path) -> CliResult<()> {
        let m = RunManifest {
            command: self.command,
            argv: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config.map(|p| p.display().to_string()),
            seed: self.seed,
            inputs: self.inputs.iter().map(|p| hash_file(p)).collect::<CliResult<_>>()?,
            outputs: self.outputs.iter().map(|p| hash_file(p)).collect::<CliResult<_>>()?,
            started_at: self.started_at,
            finished_at: now(),
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// `out.csv` → `out.csv.manifest.json`.
pub fn beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}
