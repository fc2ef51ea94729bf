//! Data files: CSV with a header row, pretty JSON, and the provenance echo.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct OutDir {
    pub path: PathBuf,
}

impl OutDir {
    /// Create the directory and echo the effective configuration into it.
    pub fn create(path: &Path, cfg: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
        let dir = OutDir { path: path.to_path_buf() };
        let text = format!("# histent {VERSION}\n{}", cfg.echo());
        dir.write_text("config.toml", &text)?;
        Ok(dir)
    }

    pub fn sub(&self, name: &str, cfg: &RunConfig) -> Result<Self, CliError> {
        OutDir::create(&self.path.join(name), cfg)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path.join(name);
        fs::write(&p, text).map_err(|e| CliError::io(format!("writing {}", p.display()), e))
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path.join(name);
        fs::write(&p, bytes).map_err(|e| CliError::io(format!("writing {}", p.display()), e))
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Output { file: name.into(), message: e.to_string() })?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_csv<I, R>(&self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let fail = |e: csv::Error| CliError::Output { file: name.into(), message: e.to_string() };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(fail)?;
        for row in rows {
            w.write_record(row).map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Output { file: name.into(), message: e.to_string() })?;
        self.write_bytes(name, &bytes)
    }
}

/// Shortest representation that reads back to the same value.
pub fn num(x: f64) -> String {
    format!("{x}")
}
