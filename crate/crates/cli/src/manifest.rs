//! Run manifests: what was read, what was written, and the headline numbers.
//! Nothing time- or host-dependent is recorded, so identical runs produce
//! identical manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_SCHEMA: &str = "qptsim-manifest/1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub command: String,
    pub tool_version: String,
    pub library_version: String,
    /// Hash over the configuration and the contents of every input.
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Input path (as given) to content hash.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to content hash.
    pub outputs: BTreeMap<String, String>,
    pub metrics: serde_json::Value,
}

/// Collects inputs and outputs while a subcommand runs.
#[derive(Debug)]
pub struct Recorder {
    command: String,
    settings: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    seed: Option<u64>,
}

impl Recorder {
    pub fn new(command: &str) -> Recorder {
        Recorder {
            command: command.to_string(),
            settings: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seed: None,
        }
    }

    /// A flag or setting that affects the result.
    pub fn setting(&mut self, key: &str, value: impl ToString) {
        self.settings.insert(key.to_string(), value.to_string());
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    /// Reads a file, recording its hash.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path)?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn track(&mut self, path: &Path) -> Result<(), CliError> {
        self.read(path).map(|_| ())
    }

    /// Writes `bytes` to `dir/name`, recording its hash.
    pub fn write(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = dir.join(name);
        std::fs::write(&path, bytes)?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.command.as_bytes());
        for (k, v) in &self.settings {
            h.update(format!("\0{k}={v}").as_bytes());
        }
        for v in self.inputs.values() {
            h.update(format!("\0{v}").as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn finish(self, metrics: serde_json::Value) -> Manifest {
        Manifest {
            schema: MANIFEST_SCHEMA.into(),
            config_hash: self.config_hash(),
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            library_version: qptsim::VERSION.into(),
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            metrics,
        }
    }
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Manifest, CliError> {
        let text = std::fs::read_to_string(path)?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| {
            CliError::Core(qptsim::Error::config(path.display().to_string(), e.to_string()))
        })?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(CliError::Integrity(format!(
                "{}: unsupported manifest schema `{}`",
                path.display(),
                m.schema
            )));
        }
        Ok(m)
    }

    /// Every recorded output in `dir` must still hash to its recorded value.
    pub fn verify_outputs(&self, dir: &Path) -> Result<(), CliError> {
        for (name, expected) in &self.outputs {
            let bytes = std::fs::read(dir.join(name))?;
            let found = sha256_hex(&bytes);
            if &found != expected {
                return Err(CliError::Integrity(format!(
                    "{} does not match its manifest hash (expected {expected}, found {found})",
                    dir.join(name).display()
                )));
            }
        }
        Ok(())
    }
}
