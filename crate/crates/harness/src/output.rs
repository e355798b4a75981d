//! CSV outputs plus an `index.json` describing them.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{runtime, HarnessError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Index {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub files: Vec<FileEntry>,
    pub notes: Vec<String>,
    pub summary: serde_json::Value,
}

pub struct OutputDir {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<OutputDir, HarnessError> {
        std::fs::create_dir_all(dir)?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    fn record(&mut self, name: &str, bytes: &[u8], rows: usize) -> Result<(), HarnessError> {
        let mut f = File::create(self.dir.join(name))?;
        f.write_all(bytes)?;
        self.files.push(FileEntry {
            name: name.to_string(),
            rows,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn write_rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(runtime)?;
        }
        let bytes = w.into_inner().map_err(runtime)?;
        self.record(name, &bytes, rows.len())
    }

    pub fn write_table(
        &mut self,
        name: &str,
        header: &[String],
        rows: &[Vec<String>],
    ) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(runtime)?;
        for r in rows {
            w.write_record(r).map_err(runtime)?;
        }
        let bytes = w.into_inner().map_err(runtime)?;
        self.record(name, &bytes, rows.len())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), HarnessError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(runtime)?;
        bytes.push(b'\n');
        self.record(name, &bytes, 1)
    }

    /// Writes `index.json` and returns it.
    pub fn finish(
        self,
        command: &str,
        config_hash: String,
        master_seed: u64,
        notes: Vec<String>,
        summary: serde_json::Value,
    ) -> Result<Index, HarnessError> {
        let index = Index {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            master_seed,
            files: self.files,
            notes,
            summary,
        };
        let mut bytes = serde_json::to_vec_pretty(&index).map_err(runtime)?;
        bytes.push(b'\n');
        std::fs::write(self.dir.join("index.json"), bytes)?;
        Ok(index)
    }
}
