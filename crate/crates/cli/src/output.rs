//! Hashed header blocks and atomic file writes.

use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Lines opening every artifact. No timestamps, so reruns are byte-identical.
#[derive(Debug, Clone)]
pub struct Provenance {
    lines: Vec<String>,
}

impl Provenance {
    pub fn new(command: &str, config_hash: Option<&str>) -> Self {
        let mut lines = vec![format!("tool: cityometrics {VERSION}"), format!("command: {command}")];
        if let Some(h) = config_hash {
            lines.push(format!("config_hash: sha256:{h}"));
        }
        Provenance { lines }
    }

    pub fn input(&mut self, label: &str, path: &Path) -> Result<(), CliError> {
        let h = sha256_file(path).map_err(|e| CliError::new("io", format!("cannot read {}: {e}", path.display())))?;
        self.lines.push(format!("input: {label} sha256:{h}"));
        Ok(())
    }

    pub fn push(&mut self, line: String) {
        self.lines.push(line);
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        for l in &self.lines {
            writeln!(w, "# {l}")?;
        }
        Ok(())
    }
}

/// Writes into a temporary file in the target directory and renames it into
/// place once `body` succeeds.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> io::Result<()>,
{
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::new("io", format!("cannot create {}: {e}", dir.display())))?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path)
        .map_err(|e| CliError::new("io", format!("cannot write {}: {}", path.display(), e.error)))?;
    Ok(())
}
