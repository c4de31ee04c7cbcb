//! Run directories and their manifests.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    args: &'a [String],
    seed: u64,
    workers: usize,
    config_sha256: String,
    config: &'a RunConfig,
    inputs: Vec<InputRecord>,
    outputs: &'a [String],
    versions: Versions,
}

#[derive(Debug, Serialize)]
struct Versions {
    cic: &'static str,
    checkpoint_format: &'static str,
    checkpoint_version: u32,
    parallel: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// An output directory that remembers what was written to it.
pub struct RunDir {
    root: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Records an input file (or every regular file of an input directory).
    pub fn input(&mut self, path: &Path) {
        if path.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)
                .into_iter()
                .flatten()
                .flatten()
                .map(|e| e.path())
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            self.inputs.extend(files);
        } else {
            self.inputs.push(path.to_path_buf());
        }
    }

    /// Marks `name` as written by this run without opening it.
    pub fn mark(&mut self, name: &str) {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
    }

    /// Writes `name` through `write`, which receives a buffered file.
    pub fn write<F>(&mut self, name: &str, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> cic_core::Result<()>,
    {
        let path = self.path(name);
        let file = File::create(&path)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        let mut out = BufWriter::new(file);
        write(&mut out).map_err(runtime)?;
        out.flush()
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.mark(name);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value)
                .map_err(|e| cic_core::Error::Data(e.to_string()))?;
            writeln!(out).map_err(|e| cic_core::Error::Data(e.to_string()))
        })
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        self.write(name, |out| {
            out.write_all(text.as_bytes())
                .map_err(|e| cic_core::Error::Data(e.to_string()))
        })
    }

    /// Writes the manifest last so that it lists every output.
    pub fn finish(
        mut self,
        command: &str,
        args: &[String],
        seed: u64,
        workers: usize,
        config: &RunConfig,
    ) -> Result<(), CliError> {
        let config_json = serde_json::to_vec(config).map_err(runtime)?;
        let mut inputs = Vec::new();
        for p in &self.inputs {
            let bytes = std::fs::read(p)
                .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", p.display())))?;
            inputs.push(InputRecord {
                path: p.display().to_string(),
                sha256: sha256_hex(&bytes),
            });
        }
        let outputs = std::mem::take(&mut self.outputs);
        let manifest = Manifest {
            command,
            args,
            seed,
            workers,
            config_sha256: sha256_hex(&config_json),
            config,
            inputs,
            outputs: &outputs,
            versions: Versions {
                cic: env!("CARGO_PKG_VERSION"),
                checkpoint_format: cic_core::models::CHECKPOINT_FORMAT,
                checkpoint_version: cic_core::models::CHECKPOINT_VERSION,
                parallel: cic_core::par::is_parallel_available(),
            },
        };
        self.write_json(MANIFEST, &manifest)
    }
}
