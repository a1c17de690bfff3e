//! Output files: atomic writes and the run manifest.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed write leaves nothing behind.
pub fn write_atomic<F>(path: &Path, fill: F) -> CliResult<()>
where
    F: FnOnce(&mut dyn Write) -> CliResult<()>,
{
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::io(path, e))?;
        writeln!(w).map_err(|e| CliError::io(path, e))
    })
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub qbld: &'static str,
}

/// Record of one command invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub algorithm: Option<String>,
    pub wall_time_seconds: f64,
    pub versions: Versions,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

pub struct ManifestBuilder {
    started: Instant,
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn start(command: &'static str, config: serde_json::Value) -> Self {
        Self {
            started: Instant::now(),
            manifest: RunManifest {
                command,
                config,
                seed: None,
                algorithm: None,
                wall_time_seconds: 0.0,
                versions: Versions { qbld: env!("CARGO_PKG_VERSION") },
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.manifest.seed = Some(seed);
        self
    }

    pub fn algorithm(&mut self, algorithm: impl ToString) -> &mut Self {
        self.manifest.algorithm = Some(algorithm.to_string());
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.manifest.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.manifest.outputs.push(path.to_path_buf());
        self
    }

    /// Writes `<dir>/<command>_manifest.json` listing every output written so far.
    pub fn finish(mut self, dir: &Path) -> CliResult<PathBuf> {
        self.manifest.wall_time_seconds = self.started.elapsed().as_secs_f64();
        for out in &self.manifest.outputs {
            if !out.exists() {
                return Err(CliError::Io(format!("expected output {} is missing", out.display())));
            }
        }
        let path = dir.join(format!("{}_manifest.json", self.manifest.command));
        write_json(&path, &self.manifest)?;
        Ok(path)
    }
}
