use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// First 64 bits of the SHA-256 of `bytes`, as hex.
pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Record of one subcommand run, written next to its outputs as
/// `<command>.manifest.json`. Contains no timestamps or absolute paths, so a
/// repeated run produces the same bytes.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: &'static str,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// Collects input digests and writes outputs into the run directory.
pub struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    pub fn new(command: &str, seed: u64, dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION"),
                seed,
                config: serde_json::Value::Null,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        })
    }

    /// Reads an input file and records its digest under `role`.
    pub fn read_input(&mut self, role: &str, path: &Path) -> Result<String> {
        let bytes = fs::read(path).with_context(|| format!("reading {role} file {}", path.display()))?;
        self.manifest.inputs.insert(role.to_string(), digest(&bytes));
        String::from_utf8(bytes).with_context(|| format!("{role} file {} is not UTF-8", path.display()))
    }

    pub fn record_input_bytes(&mut self, role: &str, bytes: &[u8]) {
        self.manifest.inputs.insert(role.to_string(), digest(bytes));
    }

    pub fn set_config(&mut self, config: &impl Serialize) -> Result<()> {
        self.manifest.config = serde_json::to_value(config)?;
        Ok(())
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.insert(name.to_string(), digest(contents.as_bytes()));
        Ok(path)
    }

    pub fn finish(self) -> Result<()> {
        let name = format!("{}.manifest.json", self.manifest.command);
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        let path = self.dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_sha256_prefix() {
        assert_eq!(digest(b""), "e3b0c44298fc1c14");
        assert_eq!(digest(b"abc"), "ba7816bf8f01cfea");
    }
}
