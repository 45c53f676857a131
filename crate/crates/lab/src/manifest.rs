//! Run manifests.
//!
//! A manifest records what produced an output directory: subcommand,
//! config, seed, tool version and SHA-256 digests of every input and
//! output file. It holds no timestamps or host details, so two runs with
//! identical manifests have byte-identical reports.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: Option<String>,
    pub seed: Option<u64>,
    pub output_dir: String,
    pub tool_version: String,
    /// File name -> hex SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(subcommand: &str, config_path: Option<&Path>, seed: Option<u64>, output_dir: &Path) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            config_path: config_path.map(|p| p.display().to_string()),
            seed,
            output_dir: output_dir.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> io::Result<()> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Digests every regular file already in the output directory.
    pub fn record_outputs(&mut self, dir: &Path) -> io::Result<()> {
        let mut files: Vec<PathBuf> = Vec::new();
        collect(dir, &mut files)?;
        files.sort();
        for f in files {
            let name = f.strip_prefix(dir).unwrap_or(&f).display().to_string();
            if name == MANIFEST_FILE {
                continue;
            }
            self.outputs.insert(name, sha256_file(&f)?);
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n")
    }
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_are_stable_and_skip_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "x\n1\n").unwrap();
        fs::create_dir(dir.path().join("sub")).unwrap();
        fs::write(dir.path().join("sub/b.csv"), "y\n").unwrap();
        let mut m = RunManifest::new("sweep", None, Some(1), dir.path());
        m.record_outputs(dir.path()).unwrap();
        m.write(dir.path()).unwrap();
        let mut again = RunManifest::new("sweep", None, Some(1), dir.path());
        again.record_outputs(dir.path()).unwrap();
        assert_eq!(m, again);
        assert_eq!(m.outputs.len(), 2);
        assert_eq!(
            m.outputs["a.csv"],
            hex::encode(Sha256::digest(b"x\n1\n"))
        );
    }
}
