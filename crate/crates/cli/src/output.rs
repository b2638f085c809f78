//! All-or-nothing output: files are written into a hidden staging directory
//! inside the destination and moved into place only when the command
//! succeeds.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub struct Staging {
    dir: tempfile::TempDir,
    dest: PathBuf,
    files: Vec<String>,
}

impl Staging {
    pub fn new(dest: &Path) -> Result<Self> {
        std::fs::create_dir_all(dest).with_context(|| format!("creating {}", dest.display()))?;
        let dir = tempfile::Builder::new()
            .prefix(".hsmooth-staging-")
            .tempdir_in(dest)
            .with_context(|| format!("staging in {}", dest.display()))?;
        Ok(Self {
            dir,
            dest: dest.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Path to write `name` to; it is moved to the destination on commit.
    pub fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.path().join(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {name}"))
    }

    /// Moves every staged file into the destination. Dropping without
    /// committing discards them.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let target = self.dest.join(name);
            std::fs::rename(self.dir.path().join(name), &target)
                .with_context(|| format!("moving {name} into {}", self.dest.display()))?;
            out.push(target);
        }
        Ok(out)
    }
}

#[derive(Serialize)]
pub struct Timing<'a> {
    pub command: &'a str,
    pub wall_seconds: f64,
    pub threads: usize,
}
