use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::Global;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// One per invocation, written next to the outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: &'static str,
    pub timestamp: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub parameters: serde_json::Value,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    pub results: serde_json::Value,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Tracks the files a stage reads and writes.
pub struct Run {
    pub global: Global,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
}

impl Run {
    pub fn new(global: Global) -> Result<Self, CliError> {
        fs::create_dir_all(&global.out_dir).map_err(|e| CliError::Data(format!("{}: {e}", global.out_dir.display())))?;
        Ok(Self { global, inputs: Vec::new(), outputs: Vec::new() })
    }

    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.inputs.push(InputRecord { path: path.display().to_string(), sha256: sha256_hex(&bytes) });
        Ok(bytes)
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&mut self, path: &Path) -> Result<T, CliError> {
        let bytes = self.read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn out_path(&self, file: &str) -> PathBuf {
        self.global.out_dir.join(file)
    }

    pub fn write(&mut self, file: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.out_path(file);
        fs::write(&path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        self.write(file, text.as_bytes())
    }

    pub fn finish(self, subcommand: &str, stem: &str, parameters: serde_json::Value, results: serde_json::Value) -> Result<(), CliError> {
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION"),
            timestamp: chrono::Utc::now().to_rfc3339(),
            seed: self.global.seed,
            threads: self.global.threads,
            parameters,
            inputs: self.inputs,
            outputs: self.outputs,
            results,
        };
        let path = self.global.out_dir.join(format!("{stem}.manifest.json"));
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Data(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}
