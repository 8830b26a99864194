//! Run directories and their manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
    /// Replays must reproduce this file byte for byte.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub created_at: String,
    pub seed: u64,
    /// Fully resolved configuration; enough to re-run the subcommand.
    pub config: serde_json::Value,
    /// Input path to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, Artifact>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_of: Option<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// `YYYYMMDDTHHMMSSZ` for the current UTC time.
fn timestamp() -> (String, String) {
    let rfc = humantime::format_rfc3339_seconds(SystemTime::now()).to_string();
    let compact = rfc.chars().filter(|c| !matches!(c, '-' | ':')).collect();
    (rfc, compact)
}

/// One invocation's output directory.
pub struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    /// Create `<out_dir>/<timestamp>-<hash>`, where the hash covers the
    /// subcommand and its resolved config.
    pub fn create(out_dir: &Path, subcommand: &str, config: serde_json::Value, seed: u64) -> CliResult<Self> {
        let (created_at, stamp) = timestamp();
        let digest = sha256_hex(format!("{subcommand}\n{config}").as_bytes());
        let base = format!("{stamp}-{}", &digest[..8]);
        std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let mut dir = out_dir.join(&base);
        let mut n = 1;
        while dir.exists() {
            n += 1;
            dir = out_dir.join(format!("{base}-{n}"));
        }
        std::fs::create_dir(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                created_at,
                seed,
                config,
                inputs: BTreeMap::new(),
                artifacts: BTreeMap::new(),
                status: "running".into(),
                replay_of: None,
            },
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn set_replay_of(&mut self, path: &Path) {
        self.manifest.replay_of = Some(path.display().to_string());
    }

    /// Record the content hash of an input file.
    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let hash = sha256_file(path).with_context(|| format!("fingerprinting {}", path.display()))?;
        self.manifest.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    /// Write an artifact into the run directory.
    pub fn artifact(&mut self, name: &str, bytes: &[u8], deterministic: bool) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.record(name, deterministic)?;
        Ok(path)
    }

    /// Register a file some other writer already put in the run directory.
    pub fn record(&mut self, name: &str, deterministic: bool) -> CliResult<()> {
        let path = self.dir.join(name);
        let sha256 = sha256_file(&path).with_context(|| format!("hashing {}", path.display()))?;
        self.manifest.artifacts.insert(
            name.to_string(),
            Artifact {
                path: name.to_string(),
                sha256,
                deterministic,
            },
        );
        Ok(())
    }

    /// Write the manifest with the given status. May be called repeatedly;
    /// the last call wins.
    pub fn write_manifest(&mut self, status: &str) -> CliResult<PathBuf> {
        self.manifest.status = status.to_string();
        let path = self.dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
