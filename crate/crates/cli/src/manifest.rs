use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub seconds: f64,
}

/// Provenance record written next to the primary output of every successful run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<PathBuf>,
    pub stages: Vec<StageRecord>,
    pub total_seconds: f64,
    pub summary: Value,
    #[serde(skip)]
    started: Option<Instant>,
}

pub fn sha256_file(path: &Path) -> Result<InputRecord> {
    let bytes = std::fs::read(path).map_err(|e| dea_core::DeaError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(InputRecord {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            tool: "dea",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            config: Value::Null,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            stages: Vec::new(),
            total_seconds: 0.0,
            summary: Value::Null,
            started: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(sha256_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn stage(&mut self, name: &str, seconds: f64) {
        self.stages.push(StageRecord {
            name: name.to_string(),
            seconds,
        });
    }

    /// Runs `f` and records its wall-clock time under `name`.
    pub fn timed<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stage(name, start.elapsed().as_secs_f64());
        out
    }

    /// Writes the manifest to `explicit`, or next to the first output.
    pub fn write(mut self, explicit: Option<&Path>) -> Result<PathBuf> {
        self.total_seconds = self.started.map_or(0.0, |s| s.elapsed().as_secs_f64());
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => default_path(self.outputs.first().map(PathBuf::as_path)),
        };
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(&path, text)
            .map_err(|e| dea_core::DeaError::Io { path: path.clone(), source: e })
            .context("writing manifest")?;
        Ok(path)
    }
}

fn default_path(primary: Option<&Path>) -> PathBuf {
    match primary {
        Some(p) if p.is_dir() => p.join("manifest.json"),
        Some(p) => {
            let mut name = p.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            p.with_file_name(name)
        }
        None => PathBuf::from("dea.manifest.json"),
    }
}
