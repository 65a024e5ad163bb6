use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

pub const TRUST_HEADER: &str = "tick,observer,subject,trust";
pub const REPORTS_HEADER: &str = "tick,verifier,attester,outcome";
pub const SE_ERRORS_HEADER: &str = "sample,tick,leader,reporting,squared_error,max_abs_error";
pub const EVICTIONS_HEADER: &str = "tick,agent,votes,n_active";
pub const TRAJECTORY_HEADER: &str = "time,observer,subject,value";

/// Output file encoding selected with `--format`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Destination directory for one command's files.
pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(path)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", path.display())))?;
        Ok(Self(path.to_path_buf()))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Abort(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| write_error(&path, e))
    }

    /// Writes `rows` under a fixed header. The header is written even when
    /// there are no rows.
    pub fn csv<T: Serialize>(&self, name: &str, header: &str, rows: &[T]) -> Result<(), CliError> {
        let path = self.path(name);
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(&path)
            .map_err(|e| write_error(&path, e))?;
        w.write_record(header.split(','))
            .map_err(|e| write_error(&path, e))?;
        for row in rows {
            w.serialize(row).map_err(|e| write_error(&path, e))?;
        }
        w.flush().map_err(|e| write_error(&path, e))
    }
}

fn write_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::config(format!("cannot write {}: {e}", path.display()))
}

pub fn read_config(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}

/// Directory that relative paths inside a config are resolved against.
pub fn config_dir(path: &Path) -> &Path {
    path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
}
