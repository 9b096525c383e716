use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    /// SHA-256 of the config with object keys sorted.
    pub config_digest: String,
    pub seed: u64,
    pub tool_version: String,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<String>,
}

/// Digest of a JSON value with object keys in sorted order, so that
/// reordering keys in a config file does not change it.
pub fn config_digest(config: &serde_json::Value) -> String {
    // serde_json's default map is ordered by key.
    let canonical = serde_json::to_string(config).expect("JSON values serialize");
    let hash = Sha256::digest(canonical.as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

fn stamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub struct Run {
    command: String,
    config: serde_json::Value,
    seed: u64,
    started: DateTime<Utc>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn start(command: &str, config: serde_json::Value, seed: u64) -> Self {
        Self { command: command.into(), config, seed, started: Utc::now(), outputs: Vec::new() }
    }

    pub fn write(&mut self, path: PathBuf, contents: &str) -> Result<(), CliError> {
        std::fs::write(&path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.outputs.push(path);
        Ok(())
    }

    /// Writes `manifest.json` into `dir`.
    pub fn finish(self, dir: &Path) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: self.command,
            config_digest: config_digest(&self.config),
            config: self.config,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            started: stamp(self.started),
            finished: stamp(Utc::now()),
            outputs: self
                .outputs
                .iter()
                .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned()))
                .collect(),
        };
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_key_order() {
        let a: serde_json::Value = serde_json::from_str(r#"{"b": 1, "a": {"y": [1, 2], "x": "s"}}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"a": {"x": "s", "y": [1, 2]}, "b": 1}"#).unwrap();
        assert_eq!(config_digest(&a), config_digest(&b));
        let c: serde_json::Value = serde_json::from_str(r#"{"a": {"x": "s", "y": [2, 1]}, "b": 1}"#).unwrap();
        assert_ne!(config_digest(&a), config_digest(&c));
    }
}
