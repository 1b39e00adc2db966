//! Service configuration file.

use std::path::{Path, PathBuf};

use capt_core::acoustic::Substitution;
use capt_core::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config out of range: {0}")]
    Range(String),
}

/// Where posteriorgrams come from when a request carries none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    /// `<ppg_dir>/<exercise id>.json`
    Fixture { ppg_dir: PathBuf },
    Demo {
        #[serde(default)]
        error_plan: Vec<Substitution>,
    },
    /// Every request must upload its own posteriorgram.
    External,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Demo { error_plan: Vec::new() }
    }
}

fn default_host() -> String {
    "127.0.0.1".into()
}

fn default_port() -> u16 {
    DEFAULT_PORT
}

fn default_cors() -> Vec<String> {
    vec!["http://localhost:5173".into(), "http://127.0.0.1:5173".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_host")]
    pub host: String,
    /// 0 picks a free port.
    #[serde(default = "default_port")]
    pub port: u16,
    pub catalog: PathBuf,
    pub attempts_dir: PathBuf,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub thresholds: PipelineConfig,
    /// Allowed browser origins; `"*"` allows any.
    #[serde(default = "default_cors")]
    pub cors_origins: Vec<String>,
}

impl ServiceConfig {
    /// Parses a config document. Relative paths resolve against `base`.
    pub fn parse(json: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: ServiceConfig = serde_json::from_str(json)?;
        cfg.thresholds.check().map_err(ConfigError::Range)?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.catalog);
        resolve(&mut cfg.attempts_dir);
        if let ProviderConfig::Fixture { ppg_dir } = &mut cfg.provider {
            resolve(ppg_dir);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}
