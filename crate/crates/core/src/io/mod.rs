//! File formats, configuration, run manifests and the experiment commands.

pub mod binary;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod tables;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use binary::{Dtype, LogitsFile, MatrixFile};
pub use commands::{run_command, Command, Inputs};
pub use config::RunConfig;
pub use manifest::{InputDigest, Manifest};
pub use tables::Table;

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
