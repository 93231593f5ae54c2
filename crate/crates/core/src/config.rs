//! Daemon configuration file (TOML).

use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

pub const CONFIG_ENV: &str = "TUNEVAULT_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub port: u16,
    pub bind: IpAddr,
    pub data_dir: PathBuf,
    /// Catalog path; `<data_dir>/catalog.src` when unset.
    pub catalog: Option<PathBuf>,
    pub scan_interval_s: f64,
    /// Production sites run captures every 4 h (14400 s).
    pub tune_interval_s: f64,
    pub sim_tick_ms: u64,
    pub seed: u64,
    pub subscriber_queue: usize,
    /// Built operator UI assets served under `/`, if present.
    pub ui_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            port: 8080,
            bind: IpAddr::from([127, 0, 0, 1]),
            data_dir: PathBuf::from("data"),
            catalog: None,
            scan_interval_s: 10.0,
            tune_interval_s: 60.0,
            sim_tick_ms: 200,
            seed: 0,
            subscriber_queue: crate::channel_db::DEFAULT_SUBSCRIBER_QUEUE,
            ui_dir: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Config::parse(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn parse(text: &str) -> Result<Config, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.scan_interval_s.is_finite() && self.scan_interval_s > 0.0) {
            return Err(ConfigError::NonPositive("scan_interval_s"));
        }
        if !(self.tune_interval_s.is_finite() && self.tune_interval_s > 0.0) {
            return Err(ConfigError::NonPositive("tune_interval_s"));
        }
        if self.sim_tick_ms == 0 {
            return Err(ConfigError::NonPositive("sim_tick_ms"));
        }
        if self.subscriber_queue == 0 {
            return Err(ConfigError::NonPositive("subscriber_queue"));
        }
        Ok(())
    }

    pub fn catalog_path(&self) -> PathBuf {
        self.catalog
            .clone()
            .unwrap_or_else(|| self.data_dir.join("catalog.src"))
    }

    pub fn scan_interval(&self) -> Duration {
        Duration::from_secs_f64(self.scan_interval_s)
    }

    pub fn tune_interval(&self) -> Duration {
        Duration::from_secs_f64(self.tune_interval_s)
    }
}
