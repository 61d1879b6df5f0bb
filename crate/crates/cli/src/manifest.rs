//! Run manifest: one entry per executed stage with input/output digests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> anyhow::Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub finished_at: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub stages: Vec<StageEntry>,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            stages: Vec::new(),
        }
    }
}

impl RunManifest {
    pub fn load_or_default(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(FILE_NAME);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(dir.join(FILE_NAME), text)?;
        Ok(())
    }
}

/// Open stage; call [`Stage::finish`] once its outputs are written.
pub struct Stage {
    name: String,
    seed: u64,
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    started_at: String,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl Stage {
    pub fn begin(name: &str, seed: u64, config: serde_json::Value, inputs: &[&Path]) -> Self {
        Self {
            name: name.to_string(),
            seed,
            config,
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
            started_at: now(),
        }
    }

    pub fn finish(self, dir: &Path, outputs: &[PathBuf]) -> anyhow::Result<()> {
        let digest = |ps: &[PathBuf]| -> anyhow::Result<Vec<FileDigest>> {
            ps.iter().map(|p| FileDigest::of(p)).collect()
        };
        let entry = StageEntry {
            stage: self.name,
            seed: self.seed,
            config: self.config,
            inputs: digest(&self.inputs)?,
            outputs: digest(outputs)?,
            started_at: self.started_at,
            finished_at: now(),
        };
        let mut manifest = RunManifest::load_or_default(dir)?;
        manifest.stages.push(entry);
        manifest.save(dir)
    }
}
