//! Per-stage run manifests and artifact I/O helpers.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub stage_seed: u64,
    pub config: Value,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    /// Stage-specific run facts such as throughput.
    pub run: Value,
    pub wall_time_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<(u64, String), CliError> {
    let mut f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        total += n as u64;
        h.update(&buf[..n]);
    }
    Ok((total, format!("{:x}", h.finalize())))
}

/// One running stage: its directory, recorded inputs and outputs.
pub struct StageRun {
    pub name: &'static str,
    pub out: PathBuf,
    pub dir: PathBuf,
    pub master_seed: u64,
    pub seed: u64,
    config: Value,
    inputs: Vec<FileRecord>,
    outputs: Vec<String>,
    pub run: Value,
    started: Instant,
}

impl StageRun {
    pub fn start(name: &'static str, out: &Path, master_seed: u64, config: Value) -> Result<Self, CliError> {
        let dir = out.join(name);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        // A stale manifest would mark a half-written rerun as complete.
        let m = dir.join(MANIFEST);
        if m.exists() {
            fs::remove_file(&m).map_err(|e| CliError::io(&m, e))?;
        }
        Ok(StageRun {
            name,
            out: out.to_path_buf(),
            dir,
            master_seed,
            seed: wikitox::seed::derive_named(master_seed, name),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            run: Value::Null,
            started: Instant::now(),
        })
    }

    /// Record an external input named by config `key`.
    pub fn external(&mut self, key: &'static str, path: &Path) -> Result<PathBuf, CliError> {
        if !path.is_file() {
            return Err(CliError::MissingInput {
                key,
                path: path.display().to_string(),
            });
        }
        let (bytes, sha256) = sha256_file(path)?;
        self.inputs.push(FileRecord {
            path: path.display().to_string(),
            bytes,
            sha256,
        });
        Ok(path.to_path_buf())
    }

    /// Record an artifact of an earlier stage, failing if that stage has not
    /// completed.
    pub fn dependency(&mut self, producer: &'static str, file: &str) -> Result<PathBuf, CliError> {
        let dir = self.out.join(producer);
        let path = dir.join(file);
        if !dir.join(MANIFEST).is_file() || !path.is_file() {
            return Err(CliError::MissingDependency {
                stage: self.name,
                artifact: format!("{producer}/{file}"),
                producer,
            });
        }
        let (bytes, sha256) = sha256_file(&path)?;
        self.inputs.push(FileRecord {
            path: format!("{producer}/{file}"),
            bytes,
            sha256,
        });
        Ok(path)
    }

    /// Path of an output file; recorded in the manifest on `finish`.
    pub fn output(&mut self, file: &str) -> PathBuf {
        self.outputs.push(file.to_string());
        self.dir.join(file)
    }

    pub fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<(), CliError> {
        let path = self.output(file);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(&path, e))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    pub fn write_text(&mut self, file: &str, text: &str) -> Result<(), CliError> {
        let path = self.output(file);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    pub fn write_jsonl<T: Serialize>(&mut self, file: &str, items: &[T]) -> Result<(), CliError> {
        let path = self.output(file);
        let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(f);
        for item in items {
            serde_json::to_writer(&mut w, item).map_err(|e| CliError::io(&path, e))?;
            w.write_all(b"\n").map_err(|e| CliError::io(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))
    }

    pub fn finish(self) -> Result<Manifest, CliError> {
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for file in &self.outputs {
            let (bytes, sha256) = sha256_file(&self.dir.join(file))?;
            outputs.push(FileRecord {
                path: format!("{}/{}", self.name, file),
                bytes,
                sha256,
            });
        }
        let manifest = Manifest {
            stage: self.name.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: self.master_seed,
            stage_seed: self.seed,
            config: self.config,
            inputs: self.inputs,
            outputs,
            run: self.run,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = self.dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::io(&path, e))? + "\n";
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

pub fn read_json<T: DeserializeOwned>(stage: &'static str, path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::invalid(stage, format!("{}: {e}", path.display())))
}

/// Parse every line of a JSON-lines file, failing on the first bad line.
pub fn read_jsonl<T: DeserializeOwned>(stage: &'static str, path: &Path) -> Result<Vec<T>, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::invalid(stage, format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}
