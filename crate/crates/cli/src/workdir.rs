//! Layout of the experiment directory and whole-file atomic writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

#[derive(Debug, Clone)]
pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn vocab(&self) -> PathBuf {
        self.root.join("vocab.tsv")
    }

    /// `part` is train, valid or test.
    pub fn manifest(&self, part: &str) -> PathBuf {
        self.root.join("split").join(format!("{part}.idx"))
    }

    pub fn queries(&self, part: &str) -> PathBuf {
        self.root.join("queries").join(format!("{part}.tsv"))
    }

    pub fn model(&self, kind: &str) -> PathBuf {
        self.root.join("models").join(format!("{kind}.model"))
    }

    pub fn weights(&self, combination: &str) -> PathBuf {
        self.root.join("tune").join(format!("{combination}.weights"))
    }

    pub fn sweep(&self, combination: &str) -> PathBuf {
        self.root.join("tune").join(format!("{combination}.sweep.tsv"))
    }

    pub fn eval_dir(&self, part: &str) -> PathBuf {
        self.root.join("eval").join(part)
    }

    pub fn resolved_config(&self) -> PathBuf {
        self.root.join("config.resolved")
    }
}

/// Writes to a temporary sibling, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}
