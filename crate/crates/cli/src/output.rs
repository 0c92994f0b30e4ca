//! Run directory, CSV/JSON writers and the run manifest.
//!
//! Floats are written with Rust's `Display`, the shortest decimal string
//! that parses back to the same binary64 value (`NaN` and `inf` as such).
//! JSON goes through serde_json, which uses the same shortest form.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Fields that describe where and when a run happened rather than what it
/// computed. They are the only manifest entries allowed to differ between
/// reproduced runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub timestamp_unix: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub config: Config,
    pub input_hashes: InputHashes,
    pub outputs: Vec<OutputFile>,
    pub environment: Environment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHashes {
    /// Hash of the config file as read, if one was given.
    pub config_file: Option<String>,
    /// Hash of the resolved config (file plus flags) as serialized here.
    pub resolved_config: String,
}

pub struct RunDir {
    pub dir: PathBuf,
    files: Vec<OutputFile>,
}

impl RunDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(OutputFile { file: name.into(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn csv(&mut self, name: &str, table: Table) -> Result<()> {
        self.write(name, &table.into_bytes()?)
    }

    pub fn finish(self, command: &str, args: &[String], config: &Config, config_file: Option<&[u8]>, threads: usize) -> Result<RunManifest> {
        let resolved = serde_json::to_vec(config)?;
        let manifest = RunManifest {
            artifact: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args: args.to_vec(),
            config: config.clone(),
            input_hashes: InputHashes { config_file: config_file.map(sha256_hex), resolved_config: sha256_hex(&resolved) },
            outputs: self.files,
            environment: Environment {
                timestamp_unix: std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
                threads,
            },
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        fs::write(self.dir.join("manifest.json"), s)?;
        Ok(manifest)
    }
}

/// A CSV table with a fixed header.
pub struct Table {
    w: csv::Writer<Vec<u8>>,
    width: usize,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(header).expect("writing to memory");
        Self { w, width: header.len() }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let fields: Vec<S> = fields.into_iter().collect();
        debug_assert_eq!(fields.len(), self.width);
        self.w.write_record(&fields).expect("writing to memory");
    }

    pub fn into_bytes(self) -> Result<Vec<u8>> {
        Ok(self.w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))?)
    }
}

/// Shortest round-trip text of a float.
pub fn num(x: f64) -> String {
    format!("{x}")
}
