//! Sibling `<output>.manifest.json` files: enough to rerun a stage and check
//! that it reproduced the same bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use reason_forge::util::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::CliError;

pub const TOOL: &str = "reason-forge";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    /// Fully resolved configuration (API keys omitted).
    pub config: Config,
    /// Run seed and the sub-seeds the stage derived from it.
    pub seeds: BTreeMap<String, u64>,
    /// SHA-256 of every file read.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every file written, this manifest excluded.
    pub outputs: BTreeMap<String, String>,
    /// Stage counters (kept/dropped, skipped pairs, ...).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub summary: serde_json::Value,
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn digest_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Collects inputs, outputs and seeds while a stage runs.
pub struct Recorder {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Config,
    pub seeds: BTreeMap<String, u64>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

impl Recorder {
    pub fn new(command: &str, argv: Vec<String>, config: Config) -> Self {
        let mut seeds = BTreeMap::new();
        seeds.insert("run".to_string(), config.seed);
        Self {
            command: command.to_string(),
            argv,
            config,
            seeds,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    /// Digest is taken at registration, before the stage can modify the file.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let digest = digest_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn seed(&mut self, stage: &str, value: u64) {
        self.seeds.insert(stage.to_string(), value);
    }

    pub fn output(&mut self, path: &Path) {
        if !self.outputs.iter().any(|p| p == path) {
            self.outputs.push(path.to_path_buf());
        }
    }

    /// Writes the manifest beside `primary` and returns it.
    pub fn finish(self, primary: &Path) -> Result<Manifest, CliError> {
        let mut outputs = BTreeMap::new();
        for p in &self.outputs {
            outputs.insert(p.display().to_string(), digest_file(p)?);
        }
        let manifest = Manifest {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command,
            argv: self.argv,
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs,
            summary: self.summary,
        };
        let path = manifest_path(primary);
        let mut text = serde_json::to_string_pretty(&manifest).map_err(reason_forge::Error::from)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

pub fn load(path: &Path) -> Result<Manifest, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("manifest {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_name_appends_suffix() {
        assert_eq!(
            manifest_path(Path::new("out/head.bin")),
            PathBuf::from("out/head.bin.manifest.json")
        );
    }

    #[test]
    fn recorder_digests_inputs_and_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        let output = dir.path().join("out.txt");
        std::fs::write(&input, b"abc").unwrap();
        let mut rec = Recorder::new("stats", vec!["stats".into()], Config::default());
        rec.input(&input).unwrap();
        std::fs::write(&output, b"").unwrap();
        rec.output(&output);
        let m = rec.finish(&output).unwrap();
        assert_eq!(
            m.inputs[&input.display().to_string()],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(
            m.outputs[&output.display().to_string()],
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(load(&manifest_path(&output)).unwrap(), m);
    }
}
