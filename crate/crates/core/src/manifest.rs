//! Run manifests: the configuration that produced a set of artifacts.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce one command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub inputs: Vec<InputDigest>,
    /// Free-form, command-specific settings (split spec, serialization
    /// options, backend configuration, seeds).
    pub settings: serde_json::Value,
    /// Digest of everything above; outputs cite it.
    pub digest: String,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> std::io::Result<String> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    /// Builds a manifest, hashing every input file.
    pub fn new(command: &str, inputs: &[PathBuf], settings: serde_json::Value) -> std::io::Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: file_sha256(p)?,
                })
            })
            .collect::<std::io::Result<Vec<_>>>()?;
        let mut manifest = RunManifest {
            command: command.to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs,
            settings,
            digest: String::new(),
            outputs: Vec::new(),
        };
        manifest.digest = manifest.config_digest();
        Ok(manifest)
    }

    /// Hash of the command, version, inputs and settings.
    pub fn config_digest(&self) -> String {
        let config = serde_json::json!({
            "command": self.command,
            "toolkit_version": self.toolkit_version,
            "inputs": self.inputs,
            "settings": self.settings,
        });
        sha256_hex(config.to_string().as_bytes())
    }

    pub fn record_output(&mut self, path: &Path) -> std::io::Result<()> {
        let sha256 = file_sha256(path)?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.outputs.retain(|o| o.path != name);
        self.outputs.push(OutputDigest { path: name, sha256 });
        Ok(())
    }

    /// Writes `manifest.json` into `dir`, replacing any previous manifest.
    pub fn write_to_dir(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }

    pub fn read_from_dir(dir: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }
}
