//! Atomic file writes: write to a temporary file in the target directory,
//! then rename over the destination.

use std::path::Path;

use crate::error::{HpmError, Result};

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let dir = dir.unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HpmError::io(dir, e))?;
    use std::io::Write;
    tmp.write_all(bytes).map_err(|e| HpmError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| HpmError::io(path, e.error))?;
    Ok(())
}
