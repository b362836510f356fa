//! Run manifest: what was run, with which parameters, and what it wrote.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub parameters: serde_json::Value,
    pub outputs: Vec<OutputFile>,
    pub timings: Vec<Timing>,
    /// Checks computed during the run (name -> value or verdict).
    pub checks: serde_json::Map<String, serde_json::Value>,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

/// Collects outputs and stage timings while a command runs.
pub struct Recorder {
    manifest: RunManifest,
    dir: PathBuf,
    stage_start: Instant,
}

impl Recorder {
    pub fn new(command: &str, config_path: Option<PathBuf>, parameters: serde_json::Value, dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            manifest: RunManifest {
                command: command.to_string(),
                config_path,
                parameters,
                outputs: Vec::new(),
                timings: Vec::new(),
                checks: serde_json::Map::new(),
            },
            dir: dir.to_path_buf(),
            stage_start: Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Close the current timing stage.
    pub fn stage(&mut self, name: &str) {
        self.manifest.timings.push(Timing {
            stage: name.to_string(),
            seconds: self.stage_start.elapsed().as_secs_f64(),
        });
        self.stage_start = Instant::now();
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        let (sha256, bytes) = sha256_file(path)?;
        let rel = path.strip_prefix(&self.dir).unwrap_or(path).to_path_buf();
        self.manifest.outputs.push(OutputFile { path: rel, sha256, bytes });
        Ok(())
    }

    pub fn outputs(&mut self, paths: &[PathBuf]) -> Result<()> {
        paths.iter().try_for_each(|p| self.output(p))
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.output(&path)?;
        Ok(path)
    }

    pub fn check(&mut self, name: &str, value: impl Serialize) {
        self.manifest
            .checks
            .insert(name.to_string(), serde_json::to_value(value).expect("serializable"));
    }

    /// Write `manifest.json`; with `verify`, re-hash every listed output.
    pub fn finish(self, verify: bool) -> Result<RunManifest> {
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        if verify {
            verify_manifest(&self.dir, &self.manifest)?;
            println!("verify: {} outputs hash-match", self.manifest.outputs.len());
        }
        Ok(self.manifest)
    }
}

pub fn verify_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    for out in &manifest.outputs {
        let path = dir.join(&out.path);
        if !path.exists() {
            bail!("listed output {} is missing", path.display());
        }
        let (sha, bytes) = sha256_file(&path)?;
        if sha != out.sha256 || bytes != out.bytes {
            bail!("hash mismatch for {}", path.display());
        }
    }
    Ok(())
}
