//! Command-line front end: asset store, input parsing, plots and run manifests.

pub mod asset;
pub mod cli;
pub mod error;
pub mod input;
pub mod manifest;
pub mod plot;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub use cli::{execute, run_cli, Cli, Command};
pub use error::{CliError, Result};

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}

/// Pretty JSON with a trailing newline; parent directories are created.
pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::json(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
