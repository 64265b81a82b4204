//! Run manifests and atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use contrastad::training::TrainConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// What a command read, how it was configured and what it wrote.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema: u32,
    pub command: String,
    pub version: &'static str,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub seeds: Vec<u64>,
    /// Effective configuration after file and flag overrides.
    pub config: Option<TrainConfig>,
    /// Verb-specific settings not covered by `config`.
    pub parameters: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            schema: MANIFEST_SCHEMA,
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION"),
            argv: std::env::args().collect(),
            seed: None,
            seeds: Vec::new(),
            config: None,
            parameters: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Writes `manifest.json` into `dir`, listing itself last.
    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        self.output(&path);
        let text = serde_json::to_string_pretty(&self)?;
        write_atomic(&path, format!("{text}\n").as_bytes())?;
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().context("output path has no file name")?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
    Ok(())
}
