//! Output directory bookkeeping: every artifact is hashed into `manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::exit::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
struct Artifact {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config: &'a C,
    artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory of one command run.
pub struct Outputs {
    root: PathBuf,
    /// Relative path -> (size, hash); sorted so the manifest is stable.
    artifacts: BTreeMap<String, (u64, String)>,
}

fn output_err(path: &Path, source: std::io::Error) -> anyhow::Error {
    CliError::Output { path: path.to_path_buf(), source }.into()
}

impl Outputs {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| output_err(root, e))?;
        Ok(Self { root: root.to_path_buf(), artifacts: BTreeMap::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Absolute path for `rel`, creating parent directories.
    pub fn path(&self, rel: &str) -> anyhow::Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| output_err(parent, e))?;
        }
        Ok(p)
    }

    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
        let p = self.path(rel)?;
        std::fs::write(&p, bytes.as_ref()).map_err(|e| output_err(&p, e))?;
        self.record(rel)
    }

    /// Hash a file that something else already wrote under the root.
    pub fn record(&mut self, rel: &str) -> anyhow::Result<()> {
        let p = self.root.join(rel);
        let bytes = std::fs::read(&p).map_err(|e| output_err(&p, e))?;
        self.artifacts.insert(rel.replace('\\', "/"), (bytes.len() as u64, sha256_hex(&bytes)));
        Ok(())
    }

    /// Record every regular file below `rel_dir`.
    pub fn record_dir(&mut self, rel_dir: &str) -> anyhow::Result<()> {
        let dir = self.root.join(rel_dir);
        let mut names: Vec<String> = std::fs::read_dir(&dir)
            .map_err(|e| output_err(&dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        for n in names {
            self.record(&format!("{rel_dir}/{n}"))?;
        }
        Ok(())
    }

    /// Write `manifest.json` and return its hash.
    pub fn finish<C: Serialize>(self, command: &str, seed: u64, config: &C) -> anyhow::Result<String> {
        let manifest = Manifest {
            tool: "flamenco",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config,
            artifacts: self
                .artifacts
                .into_iter()
                .map(|(path, (bytes, sha256))| Artifact { path, bytes, sha256 })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        let p = self.root.join(MANIFEST);
        std::fs::write(&p, &text).map_err(|e| output_err(&p, e))?;
        Ok(sha256_hex(text.as_bytes()))
    }
}
