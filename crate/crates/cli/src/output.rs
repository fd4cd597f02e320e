//! Output directory bookkeeping: every file goes through [`RunOutput`] so the
//! manifest lists exactly what was written.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub subcommand: String,
    pub config_sha256: String,
    pub seed: u64,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub files: Vec<FileEntry>,
}

pub struct RunOutput {
    dir: PathBuf,
    subcommand: String,
    config_sha256: String,
    seed: u64,
    started_unix_ms: u128,
    files: Vec<FileEntry>,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunOutput {
    pub fn create(dir: &Path, subcommand: &str, canonical_config: &str, seed: u64) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            subcommand: subcommand.to_string(),
            config_sha256: sha256_hex(canonical_config.as_bytes()),
            seed,
            started_unix_ms: now_ms(),
            files: Vec::new(),
        })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let mut f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        f.write_all(bytes).map_err(|e| io_err(&path, e))?;
        self.files.retain(|e| e.path != name);
        self.files.push(FileEntry { path: name.to_string(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Renders through `fill` into memory first so a failed render leaves no file behind.
    pub fn write_with(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> wgheat_core::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    pub fn finish(self) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            config_sha256: self.config_sha256,
            seed: self.seed,
            started_unix_ms: self.started_unix_ms,
            finished_unix_ms: now_ms(),
            files: self.files,
        };
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok(manifest)
    }
}

/// Whitespace-separated plot columns `log10_kappa log10_err log10_bound`,
/// sorted by increasing κ. Rows with `κ = 0` or no bound have no logarithm
/// and are dropped; with no usable rows only the header is written.
pub fn sweep_plot_data(rows: &[(f64, f64, Option<f64>)]) -> String {
    let mut usable: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter_map(|&(kappa, err, bound)| {
            let bound = bound?;
            (kappa > 0.0 && err > 0.0 && bound > 0.0).then_some((kappa, err, bound))
        })
        .collect();
    usable.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = String::from("# log10_kappa log10_err log10_bound\n");
    for (kappa, err, bound) in usable {
        out.push_str(&format!("{:.16e} {:.16e} {:.16e}\n", kappa.log10(), err.log10(), bound.log10()));
    }
    out
}
