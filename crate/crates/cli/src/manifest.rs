//! Run manifests and the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Directory the run was started from; relative paths in `argv` resolve against it.
    pub working_dir: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects inputs, outputs and timings for one run.
pub struct Run {
    out: PathBuf,
    command: String,
    argv: Vec<String>,
    seed: u64,
    config: serde_json::Value,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    timings: BTreeMap<String, f64>,
}

impl Run {
    pub fn new(out: &Path, command: &str, argv: Vec<String>, seed: u64) -> Result<Self, CliError> {
        fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        Ok(Self {
            out: out.to_path_buf(),
            command: command.to_string(),
            argv,
            seed,
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
        })
    }

    pub fn set_config<T: Serialize>(&mut self, config: &T) {
        self.config = serde_json::to_value(config).expect("config serializes");
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    /// Time `f` under `phase`.
    pub fn timed<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let v = f();
        *self.timings.entry(phase.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
        v
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.record_output(name, &path)
    }

    pub fn write_matrix(&mut self, name: &str, m: ArrayView2<'_, f64>) -> Result<(), CliError> {
        let path = self.out.join(name);
        lsmi_sinkhorn::data::write_table(&path, m)?;
        self.record_output(name, &path)
    }

    fn record_output(&mut self, name: &str, path: &Path) -> Result<(), CliError> {
        let sha256 = sha256_file(path)?;
        self.outputs.push(FileDigest {
            path: name.to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn finish(self) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command,
            working_dir: std::env::current_dir()
                .map(|d| d.display().to_string())
                .unwrap_or_default(),
            argv: self.argv,
            seed: self.seed,
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
            timings: self.timings,
        };
        let path = self.out.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Key-value text, one `key: value` per line, in insertion order.
#[derive(Debug, Default)]
pub struct Record {
    lines: Vec<String>,
}

impl Record {
    pub fn put(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.lines.push(format!("{key}: {value}"));
        self
    }

    pub fn render(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

pub fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
