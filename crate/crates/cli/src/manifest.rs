//! Atomic artifact writes and the per-run manifest.
//!
//! Every output file is first written to a `.tmp` sibling and renamed, so
//! an interrupted run never leaves a partial artifact under a final name.
//! The manifest lists the config hash, the seed list, and a SHA-256 per
//! artifact; rerunning with identical inputs reproduces identical bytes.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Write bytes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} into place", tmp.display()))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    /// Artifact path (relative to the manifest) -> SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
}

/// Collects artifacts, writing each atomically, then lands `manifest.json`.
pub struct ArtifactWriter {
    dir: PathBuf,
    manifest: Manifest,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, config_bytes: &[u8], seeds: Vec<u64>) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                config_sha256: sha256_hex(config_bytes),
                seeds,
                artifacts: BTreeMap::new(),
            },
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Write one artifact (relative name) and record its checksum.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.manifest
            .artifacts
            .insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Finalize: write `manifest.json` (itself atomic) and return it.
    pub fn finish(self) -> Result<Manifest> {
        let json = serde_json::to_vec_pretty(&self.manifest)?;
        write_atomic(&self.dir.join("manifest.json"), &json)?;
        Ok(self.manifest)
    }
}
