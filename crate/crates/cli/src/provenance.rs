use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mcgen_core::seed::sha256_hex;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
        Ok(FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        })
    }
}

/// Record written next to the outputs of every command. Holds no clock
/// readings, so identical runs produce identical records.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub deterministic: bool,
    pub workers: usize,
    pub config: Value,
    pub config_hash: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunRecord {
    pub fn new(command: &str, config: Value, seed: u64, deterministic: bool, workers: usize) -> Self {
        let config_hash = sha256_hex(config.to_string().as_bytes());
        RunRecord {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            deterministic,
            workers,
            config,
            config_hash,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    /// Writes `<dir>/provenance/<command>.json` and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let d = dir.join("provenance");
        std::fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
        let p = d.join(format!("{}.json", self.command));
        std::fs::write(&p, serde_json::to_vec_pretty(self)?).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }
}
