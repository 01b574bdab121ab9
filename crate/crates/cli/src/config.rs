//! Settings shared by all subcommands. A value given as a flag wins over the
//! config file, which wins over the environment.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

pub const ENV_SIDECAR_URL: &str = "LEXSIMP_SIDECAR_URL";
pub const ENV_FREQ_DIR: &str = "LEXSIMP_FREQ_DIR";

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub sidecar_url: Option<String>,
    pub freq_dir: Option<PathBuf>,
    pub embed_model: Option<String>,
    pub jobs: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Values supplied on the command line.
#[derive(Debug, Default, Clone)]
pub struct FlagValues {
    pub sidecar_url: Option<String>,
    pub freq_dir: Option<PathBuf>,
    pub embed_model: Option<String>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub sidecar_url: Option<String>,
    pub freq_dir: Option<PathBuf>,
    pub embed_model: Option<String>,
    /// 0 lets the thread pool pick.
    pub jobs: usize,
}

impl Settings {
    pub fn resolve(flags: FlagValues, file: FileConfig, env: impl Fn(&str) -> Option<String>) -> Self {
        Settings {
            sidecar_url: flags.sidecar_url.or(file.sidecar_url).or_else(|| env(ENV_SIDECAR_URL)),
            freq_dir: flags
                .freq_dir
                .or(file.freq_dir)
                .or_else(|| env(ENV_FREQ_DIR).map(PathBuf::from)),
            embed_model: flags.embed_model.or(file.embed_model),
            jobs: flags.jobs.or(file.jobs).unwrap_or(0),
        }
    }
}
