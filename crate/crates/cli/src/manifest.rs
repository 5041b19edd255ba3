//! Run manifests and the staging area outputs are written through.

use std::fs;
use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::command::Command;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOL: &str = "flexscatter";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to repeat a run: the command, its resolved
/// configuration and digests of every file read and written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub command: Command,
    pub config: RunConfig,
    pub inputs: Vec<FileRecord>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileRecord>,
    /// Outputs such as wall-clock timings that are not reproducible.
    pub unhashed: Vec<String>,
    /// Headline numbers of the run.
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Digest of an input file under its absolute path.
pub fn record_input(path: &Path) -> CliResult<FileRecord> {
    let abs = fs::canonicalize(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileRecord {
        sha256: hash_file(&abs)?,
        path: abs.to_string_lossy().into_owned(),
    })
}

/// Collects a run's outputs in a hidden directory inside the output
/// directory and moves them into place only when the run succeeds.
pub struct Staging {
    dir: Option<tempfile::TempDir>,
    out: PathBuf,
    created_out: bool,
    hashed: Vec<String>,
    unhashed: Vec<String>,
}

impl Staging {
    pub fn new(out: &Path) -> CliResult<Self> {
        let created_out = !out.exists();
        fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        let dir = tempfile::Builder::new()
            .prefix(".staging-")
            .tempdir_in(out)
            .map_err(|e| CliError::io(out, e))?;
        Ok(Self {
            dir: Some(dir),
            out: out.to_path_buf(),
            created_out,
            hashed: Vec::new(),
            unhashed: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        self.dir.as_ref().expect("staging is live").path()
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path().join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let p = self.file(name);
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        self.hashed.push(name.to_string());
        Ok(())
    }

    /// Registers a file some library call already wrote into the staging area.
    pub fn adopt(&mut self, name: &str) {
        self.hashed.push(name.to_string());
    }

    pub fn write_unhashed(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let p = self.file(name);
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        self.unhashed.push(name.to_string());
        Ok(())
    }

    pub fn unhashed(&self) -> Vec<String> {
        self.unhashed.clone()
    }

    pub fn records(&self) -> CliResult<Vec<FileRecord>> {
        self.hashed
            .iter()
            .map(|name| {
                Ok(FileRecord {
                    path: name.clone(),
                    sha256: hash_file(&self.file(name))?,
                })
            })
            .collect()
    }

    /// Writes the manifest and moves every staged file into the output
    /// directory, each by an atomic rename.
    pub fn commit(mut self, manifest: &RunManifest) -> CliResult<()> {
        let m = self.file(MANIFEST_FILE);
        fs::write(&m, manifest.to_json()).map_err(|e| CliError::io(&m, e))?;
        let mut names = self.hashed.clone();
        names.extend(self.unhashed.iter().cloned());
        names.push(MANIFEST_FILE.to_string());
        for name in names {
            let (from, to) = (self.file(&name), self.out.join(&name));
            fs::rename(&from, &to).map_err(|e| CliError::io(&to, e))?;
        }
        self.dir.take();
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if let Some(dir) = self.dir.take() {
            drop(dir);
            if self.created_out {
                let _ = fs::remove_dir(&self.out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn abandoned_staging_leaves_nothing() {
        let root = tempfile::tempdir().unwrap();
        let out = root.path().join("run");
        {
            let mut s = Staging::new(&out).unwrap();
            s.write("a.bin", b"partial").unwrap();
            assert!(s.file("a.bin").exists());
        }
        assert!(!out.exists());
    }

    #[test]
    fn existing_directory_survives_failure() {
        let root = tempfile::tempdir().unwrap();
        fs::write(root.path().join("keep.txt"), b"x").unwrap();
        {
            let mut s = Staging::new(root.path()).unwrap();
            s.write("a.bin", b"partial").unwrap();
        }
        let names: Vec<_> = fs::read_dir(root.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("keep.txt")]);
    }
}
