use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Plain CSV table; numbers are written with the shortest round-trip
/// representation so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Cell formatting for numbers.
pub fn num<T: std::fmt::Display>(v: T) -> String {
    v.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files under a run directory and removes them again unless
/// [`RunWriter::commit`] is called.
pub struct RunWriter {
    root: PathBuf,
    created_root: bool,
    written: Vec<PathBuf>,
    created_dirs: Vec<PathBuf>,
    committed: bool,
}

impl RunWriter {
    pub fn new(root: &Path) -> Result<Self> {
        let created_root = !root.exists();
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(RunWriter {
            root: root.to_path_buf(),
            created_root,
            written: Vec::new(),
            created_dirs: Vec::new(),
            committed: false,
        })
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<FileRecord> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            if !dir.exists() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                self.created_dirs.push(dir.to_path_buf());
            }
        }
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        self.written.push(path.clone());
        f.write_all(bytes).map_err(|e| Error::io(&path, e))?;
        f.sync_all().map_err(|e| Error::io(&path, e))?;
        Ok(FileRecord {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        })
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for RunWriter {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in self.written.iter().rev() {
            let _ = fs::remove_file(p);
        }
        for d in self.created_dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
        if self.created_root {
            let _ = fs::remove_dir(&self.root);
        }
    }
}
