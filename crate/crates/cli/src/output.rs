use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use samm2d::{Error, Result};

/// An output directory that can be rolled back to its state before the
/// command ran.
pub struct OutputDir {
    path: PathBuf,
    existed: bool,
    before: BTreeSet<OsString>,
}

impl OutputDir {
    pub fn open(path: &Path) -> Result<Self> {
        let existed = path.exists();
        if existed && !path.is_dir() {
            return Err(Error::Data(format!(
                "{} exists and is not a directory",
                path.display()
            )));
        }
        fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
        let before = entries(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            existed,
            before,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Removes everything this command created. Files that already
    /// existed and were overwritten are left in place.
    pub fn rollback(&self) {
        if !self.existed {
            let _ = fs::remove_dir_all(&self.path);
            return;
        }
        let Ok(now) = entries(&self.path) else { return };
        for name in now.difference(&self.before) {
            let p = self.path.join(name);
            let _ = if p.is_dir() {
                fs::remove_dir_all(&p)
            } else {
                fs::remove_file(&p)
            };
        }
    }
}

fn entries(dir: &Path) -> Result<BTreeSet<OsString>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    rd.map(|e| e.map(|e| e.file_name()).map_err(|err| Error::io(dir, err)))
        .collect()
}

/// Runs `body` against `out`, rolling back on failure.
pub fn with_output<T>(out: &Path, body: impl FnOnce(&OutputDir) -> Result<T>) -> Result<T> {
    let dir = OutputDir::open(out)?;
    let result = body(&dir);
    if result.is_err() {
        dir.rollback();
    }
    result
}
