//! Run manifests and atomic file output.
//!
//! Every output directory gets exactly one `manifest.json` recording the
//! configuration snapshot, the seed, SHA-256 hashes of all file inputs, the
//! tool version, and the wall-clock runtime. Reruns with identical inputs
//! reproduce byte-identical numeric outputs; only `runtime_seconds` varies.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Full text of the run configuration, or the built-in defaults note.
    pub config: String,
    pub inputs: Vec<InputHash>,
    pub runtime_seconds: f64,
}

/// Collects manifest fields over the course of one command.
pub struct ManifestBuilder {
    command: &'static str,
    seed: u64,
    config: String,
    inputs: Vec<InputHash>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            seed: 0,
            config: "(built-in defaults)".to_string(),
            inputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = seed;
        self
    }

    pub fn config_text(&mut self, text: &str) -> &mut Self {
        self.config = text.to_string();
        self
    }

    /// Hashes a file input and records it.
    pub fn input(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Data(format!("cannot read `{}`: {e}", path.display())))?;
        self.inputs.push(InputHash {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(self)
    }

    /// Finalizes and writes `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let manifest = RunManifest {
            tool: "monogp".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.to_string(),
            seed: self.seed,
            config: self.config.clone(),
            inputs: self.inputs.clone(),
            runtime_seconds: self.started.elapsed().as_secs_f64(),
        };
        write_json(&dir.join("manifest.json"), &manifest)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Creates `dir` (and parents) if needed.
pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create `{}`: {e}", dir.display())))
}

/// Writes atomically: the bytes land in a temporary sibling which is then
/// renamed over the destination, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Config(format!("`{}` is not a file path", path.display())))?;
    let mut tmp: PathBuf = dir.to_path_buf();
    tmp.push(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        CliError::Data(format!("cannot write `{}`: {e}", path.display()))
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("cannot serialize `{}`: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read `{}`: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("malformed `{}`: {e}", path.display())))
}
