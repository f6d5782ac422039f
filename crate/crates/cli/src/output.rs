//! Output directory handling: versioned CSV, JSON and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything needed to reproduce an output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub scenario_path: String,
    pub scenario_sha256: String,
    pub seed: u64,
    /// Normalised command line (seed resolved, output directory omitted).
    pub args: Vec<String>,
    pub output_dir: String,
    /// Artifact path relative to the output directory, and its SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Writes artifacts under one directory, recording their checksums.
pub struct OutputDir {
    root: PathBuf,
    artifacts: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<OutputDir> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            artifacts: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// CSV preceded by a `#schema=<schema>` row.
    pub fn write_csv(&mut self, name: &str, schema: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut buf = format!("#schema={schema}\n").into_bytes();
        {
            let mut writer = csv::Writer::from_writer(&mut buf);
            writer.write_record(header)?;
            for row in rows {
                writer.write_record(row)?;
            }
            writer.flush()?;
        }
        self.write(name, &buf)
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<RunManifest> {
        manifest.artifacts = self.artifacts;
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.root.join(MANIFEST_FILE);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}
