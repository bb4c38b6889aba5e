//! Run manifests: config echo plus SHA-256 of every input and output file,
//! so each artifact can be traced to the exact files it was made from.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tsp_core::harness::sha256_hex;
use tsp_core::write_atomic;

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub formats: BTreeMap<&'static str, u16>,
}

pub struct Recorder {
    root: PathBuf,
    manifest: RunManifest,
}

impl Recorder {
    pub fn new(command: &str, root: &Path, config: serde_json::Value) -> Self {
        let config_hash = config_hash(&config);
        Self {
            root: root.to_path_buf(),
            manifest: RunManifest {
                tool: "tsplidar",
                version: env!("CARGO_PKG_VERSION"),
                command: command.to_string(),
                config_hash,
                config,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                formats: BTreeMap::from([("TSPB", 1), ("TSPD", 1), ("TSPK", 1), ("TSPM", 1), ("TSPN", 1)]),
            },
        }
    }

    pub fn config_hash(&self) -> &str {
        &self.manifest.config_hash
    }

    fn key(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).display().to_string()
    }

    fn hash(path: &Path) -> anyhow::Result<String> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(sha256_hex(&bytes))
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let h = Self::hash(path)?;
        self.manifest.inputs.insert(self.key(path), h);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> anyhow::Result<()> {
        let h = Self::hash(path)?;
        self.manifest.outputs.insert(self.key(path), h);
        Ok(())
    }

    /// Writes the manifest to `path` and returns it.
    pub fn finish(self, path: &Path) -> anyhow::Result<RunManifest> {
        let mut json = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        json.push(b'\n');
        write_atomic(path, &json)?;
        Ok(self.manifest)
    }
}

/// SHA-256 of the compact JSON with keys in sorted order.
pub fn config_hash(config: &serde_json::Value) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("json value serializes"))
}
