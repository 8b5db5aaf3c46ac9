//! Run manifests: every command writes one next to its primary output, with
//! the full resolved parameter set, so the run can be reproduced
//! byte-for-byte with `mnnlab rerun`.

use crate::params::CommandParams;
use mnnlab_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    #[serde(flatten)]
    pub command: CommandParams,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub duration_ms: u64,
}

impl RunManifest {
    pub fn new(
        command: CommandParams,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
        duration_ms: u64,
    ) -> Self {
        RunManifest {
            schema_version: 1,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            inputs,
            outputs,
            duration_ms,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        mnnlab_core::io::write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        mnnlab_core::io::read_json(path)
    }
}

/// Default manifest location: alongside the primary output.
pub fn default_manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map_or_else(
        || std::ffi::OsString::from("run"),
        |n| n.to_os_string(),
    );
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() && !parent.exists() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    Ok(())
}
