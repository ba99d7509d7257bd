use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Run configuration echoed as the first line of every CSV output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub alpha: f64,
    pub sigma: f64,
    pub n0: u64,
    pub n: u64,
    pub seed: u64,
    pub method: String,
    /// Command-specific settings.
    pub settings: BTreeMap<String, serde_json::Value>,
    /// SHA-256 of each input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, common: &crate::CommonArgs, sigma: f64, method: &str) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            alpha: common.alpha,
            sigma,
            n0: common.n0,
            n: common.n,
            seed: common.seed,
            method: method.to_string(),
            settings: BTreeMap::new(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn setting(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.settings.insert(key.to_string(), value.into());
        self
    }

    pub fn add_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.insert(path.display().to_string(), hex::encode(Sha256::digest(bytes)));
    }

    /// The manifest as a `#`-prefixed single-line JSON comment, newline included.
    pub fn header_line(&self) -> Result<String, CliError> {
        let json = serde_json::to_string(self).map_err(|e| CliError::Data(e.to_string()))?;
        Ok(format!("# {json}\n"))
    }
}

pub fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
