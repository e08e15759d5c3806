//! Atomic artifact writes: everything is staged next to its destination and
//! renamed into place, so an interrupted run never leaves a partial file.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use tempfile::{Builder, NamedTempFile};

fn staging_dir(path: &Path) -> anyhow::Result<&Path> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    Ok(parent)
}

fn staged_file(path: &Path) -> anyhow::Result<NamedTempFile> {
    let dir = staging_dir(path)?;
    let mut builder = Builder::new();
    builder.prefix(".stforge-");
    #[cfg(unix)]
    builder.permissions(std::os::unix::fs::PermissionsExt::from_mode(0o644));
    builder
        .tempfile_in(dir)
        .with_context(|| format!("staging {}", path.display()))
}

fn commit(tmp: NamedTempFile, path: &Path) -> anyhow::Result<()> {
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    write_atomic_with(path, |w| Ok(w.write_all(bytes)?))
}

/// Streams into a staged file through a buffered writer.
pub fn write_atomic_with(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    let mut tmp = staged_file(path)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    commit(tmp, path)
}

/// For writers that insist on opening a path themselves (e.g. WAV encoders).
pub fn write_atomic_via_path(
    path: &Path,
    fill: impl FnOnce(&Path) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    let tmp = staged_file(path)?;
    fill(tmp.path())?;
    commit(tmp, path)
}

/// Builds a directory in a staging location, then swaps it into place.
pub fn write_dir_atomic(path: &Path, fill: impl FnOnce(&Path) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let parent = staging_dir(path)?;
    let staged = Builder::new().prefix(".stforge-").tempdir_in(parent)?;
    fill(staged.path())?;
    let staged = staged.keep();
    #[cfg(unix)]
    fs::set_permissions(&staged, std::os::unix::fs::PermissionsExt::from_mode(0o755))?;
    if path.exists() {
        let old = Builder::new().prefix(".stforge-old-").tempdir_in(parent)?.keep();
        fs::rename(path, old.join("prev")).with_context(|| format!("moving aside {}", path.display()))?;
        fs::rename(&staged, path).with_context(|| format!("renaming into {}", path.display()))?;
        fs::remove_dir_all(&old)?;
    } else {
        fs::rename(&staged, path).with_context(|| format!("renaming into {}", path.display()))?;
    }
    Ok(())
}
