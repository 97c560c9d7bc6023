//! Result files and the run manifest.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Format};
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputRecord>,
    /// Set when a checked property did not hold.
    #[serde(default)]
    pub assertion: Option<String>,
}

/// Tracks every file a run writes so a failed run can remove them.
pub struct OutputSet {
    dir: PathBuf,
    format: Format,
    written: Vec<String>,
}

impl OutputSet {
    /// Create the directory and make sure it takes files.
    pub fn open(dir: &Path, format: Format) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::Validation(format!("cannot create {}: {e}", dir.display())))?;
        let probe = dir.join(".write-probe");
        fs::write(&probe, b"")
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| CliError::Validation(format!("output directory {} is not writable: {e}", dir.display())))?;
        let stale = dir.join(MANIFEST);
        if stale.exists() {
            fs::remove_file(&stale).map_err(|e| CliError::io(&stale, e))?;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn create(&mut self, file: String, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
        let path = self.dir.join(&file);
        if self.written.contains(&file) {
            return Err(CliError::Validation(format!("output {file} written twice")));
        }
        self.written.push(file);
        let f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(f);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))
    }

    /// A numeric table: CSV through `csv`, or the JSON form of `value`.
    pub fn table<T: Serialize>(
        &mut self,
        stem: &str,
        value: &T,
        csv: impl FnOnce(&mut dyn Write) -> io::Result<()>,
    ) -> Result<()> {
        match self.format {
            Format::Csv => self.create(format!("{stem}.csv"), csv),
            Format::Json => self.json(stem, value),
        }
    }

    pub fn json<T: Serialize>(&mut self, stem: &str, value: &T) -> Result<()> {
        self.create(format!("{stem}.json"), |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
            writeln!(w)
        })
    }

    /// Checksums of everything written, in write order.
    pub fn records(&self) -> Result<Vec<OutputRecord>> {
        self.written
            .iter()
            .map(|file| {
                let path = self.dir.join(file);
                let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
                Ok(OutputRecord {
                    file: file.clone(),
                    bytes: bytes.len() as u64,
                    sha256: hex::encode(Sha256::digest(&bytes)),
                })
            })
            .collect()
    }

    /// Write the manifest through a temporary file so its presence marks a
    /// complete run.
    pub fn finish(self, manifest: &RunManifest) -> Result<()> {
        let tmp = self.dir.join(format!("{MANIFEST}.tmp"));
        let text = serde_json::to_string_pretty(manifest).map_err(|e| CliError::io(&tmp, io::Error::other(e)))?;
        fs::write(&tmp, text + "\n").map_err(|e| CliError::io(&tmp, e))?;
        let dest = self.dir.join(MANIFEST);
        fs::rename(&tmp, &dest).map_err(|e| CliError::io(&dest, e))
    }

    /// Remove everything written so far, and any stale manifest.
    pub fn discard(self) {
        for f in &self.written {
            let _ = fs::remove_file(self.dir.join(f));
        }
        let _ = fs::remove_file(self.dir.join(format!("{MANIFEST}.tmp")));
    }
}
