//! Run manifests: one JSON record per command invocation, listing every file it wrote.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use graphon_sir::sir::Diagnostics;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const FORMAT: &str = "gsir-manifest/1";

/// JSON schema the manifests conform to.
pub const SCHEMA: &str = include_str!("../schema/manifest.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// File name relative to the manifest directory.
    pub path: String,
    pub kind: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub scenario: String,
    pub config_path: String,
    pub config_sha256: String,
    pub master_seed: u64,
    /// Child seeds by role.
    pub seeds: BTreeMap<String, u64>,
    /// Replica seeds of a Montecarlo ensemble, in replica order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replica_seeds: Vec<u64>,
    pub n: Option<usize>,
    /// The parsed scenario.
    pub params: serde_json::Value,
    pub diagnostics: Option<Diagnostics>,
    pub max_invariant_violation: Option<f64>,
    /// Command-specific results.
    pub summary: serde_json::Value,
    pub outputs: Vec<OutputFile>,
    pub wall_time_s: f64,
    pub created_unix: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects the files written by one command.
#[derive(Debug)]
pub struct Outputs {
    pub dir: PathBuf,
    pub prefix: String,
    files: Vec<OutputFile>,
}

impl Outputs {
    pub fn new(dir: &Path, prefix: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            prefix: prefix.to_string(),
            files: Vec::new(),
        })
    }

    pub fn name(&self, suffix: &str) -> String {
        format!("{}_{suffix}", self.prefix)
    }

    /// Writes `<prefix>_<suffix>` through `fill` and records its hash.
    pub fn write<F>(&mut self, suffix: &str, kind: &str, fill: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut BufWriter<File>) -> graphon_sir::Result<()>,
    {
        let name = self.name(suffix);
        let path = self.dir.join(&name);
        {
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            fill(&mut w).with_context(|| format!("writing {}", path.display()))?;
            w.flush()?;
        }
        let bytes = std::fs::read(&path)?;
        self.files.push(OutputFile {
            path: name,
            kind: kind.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(path)
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    /// Writes the manifest next to the outputs; returns its path.
    pub fn finish(self, mut manifest: Manifest) -> Result<PathBuf> {
        manifest.outputs = self.files;
        let path = self.dir.join(format!("{}_{}_manifest.json", self.prefix, manifest.command));
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        graphon_sir::io::write_json(BufWriter::new(file), &manifest)?;
        Ok(path)
    }
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_input() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn schema_is_valid_json() {
        let v: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
        assert_eq!(v["properties"]["format"]["const"], FORMAT);
    }
}
