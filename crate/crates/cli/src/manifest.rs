//! Run manifests: what was run, on which inputs, so a run can be replayed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FORMAT: &str = "vacalib-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: String,
    pub tool_version: String,
    pub command: String,
    /// The parsed command with every path made absolute.
    pub invocation: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    #[serde(default)]
    pub notes: Vec<String>,
    pub started: String,
    pub finished: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn digest_inputs(paths: &[PathBuf]) -> Result<Vec<InputDigest>> {
    let mut out: Vec<InputDigest> = Vec::new();
    for p in paths {
        if out.iter().any(|d| &d.path == p) {
            continue;
        }
        out.push(InputDigest {
            path: p.clone(),
            sha256: sha256_file(p)?,
        });
    }
    Ok(out)
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl RunManifest {
    /// Fails on the first input whose content changed since the run.
    pub fn verify_inputs(&self) -> Result<()> {
        for d in &self.inputs {
            let found = sha256_file(&d.path)?;
            if found != d.sha256 {
                return Err(CliError::DigestMismatch {
                    path: d.path.clone(),
                    recorded: d.sha256.clone(),
                    found,
                });
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let m: RunManifest = crate::read_json(path)?;
        if m.format_version != MANIFEST_FORMAT {
            return Err(CliError::usage(format!(
                "{}: manifest format `{}` is not supported",
                path.display(),
                m.format_version
            )));
        }
        Ok(m)
    }
}
