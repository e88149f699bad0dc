//! Self-describing run directories.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hyfi::hypergraph::io::{FEATURES_FILE, HYPEREDGES_FILE, LABELS_FILE};
use hyfi::RunConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct DatasetFingerprint {
    pub path: PathBuf,
    /// SHA-256 over the name and bytes of each dataset file that exists.
    pub sha256: String,
    pub files: Vec<String>,
}

/// Hash the dataset files. Labels are included only if present.
pub fn fingerprint(dir: &Path) -> Result<DatasetFingerprint> {
    let mut hasher = Sha256::new();
    let mut files = Vec::new();
    for name in [HYPEREDGES_FILE, FEATURES_FILE, LABELS_FILE] {
        let path = dir.join(name);
        if !path.exists() {
            continue;
        }
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
        files.push(name.to_string());
    }
    Ok(DatasetFingerprint {
        path: dir.to_path_buf(),
        sha256: hasher.finalize().iter().map(|b| format!("{b:02x}")).collect(),
        files,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub dataset: DatasetFingerprint,
    pub config: RunConfig,
    pub started_at: String,
    pub finished_at: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, data: &Path, config: &RunConfig) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.train.seed,
            dataset: fingerprint(data)?,
            config: config.clone(),
            started_at: now(),
            finished_at: None,
        })
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        write_json(&out.join("manifest.json"), self)?;
        write_json(&out.join("config.json"), &self.config)
    }

    pub fn finish(&mut self, out: &Path) -> Result<()> {
        self.finished_at = Some(now());
        self.write(out)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
