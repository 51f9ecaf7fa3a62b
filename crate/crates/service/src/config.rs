use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::Context;
use logoped_core::therapy::LearningConfig;
use logoped_core::SegmenterConfig;
use serde::{Deserialize, Serialize};

/// Environment variable naming the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "LOGOPED_CONFIG";

/// Service configuration, read from TOML. Every key is optional.
///
/// ```toml
/// store_dir = "/var/lib/logoped"
/// listen = "127.0.0.1:8080"
///
/// [segmenter]
/// min_segment_ms = 120
///
/// [learning]
/// eta = 0.05
/// tau = 0.1
/// credit = "direction"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub store_dir: PathBuf,
    pub listen: SocketAddr,
    pub segmenter: SegmenterConfig,
    pub learning: LearningConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            store_dir: PathBuf::from("logoped-data"),
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            segmenter: SegmenterConfig::default(),
            learning: LearningConfig::default(),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: Config = toml::from_str(text)?;
        cfg.segmenter.validate()?;
        cfg.learning.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// The file at `path` if given, otherwise the defaults.
    pub fn load_or_default(path: Option<&Path>) -> anyhow::Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
