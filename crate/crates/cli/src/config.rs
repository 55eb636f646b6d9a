//! Client configuration: `~/.config/mizsrv/client.toml` plus environment.
//!
//! ```toml
//! server_url = "https://mizar.example.org:8443"
//! token = "..."
//! poll_interval_ms = 500
//! timeout_s = 600
//! toolchain_version = "builtin-1.0"
//! ca_cert = "/etc/mizsrv/ca.pem"
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use mizsrv_core::BUILTIN_VERSION;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_URL: &str = "MIZSRV_URL";
pub const ENV_TOKEN: &str = "MIZSRV_TOKEN";
pub const MIN_POLL_INTERVAL_MS: u64 = 50;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid client configuration {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub server_url: String,
    pub token: Option<String>,
    pub poll_interval_ms: u64,
    pub timeout_s: u64,
    pub toolchain_version: String,
    /// Extra PEM root certificate, for servers with a private CA.
    pub ca_cert: Option<PathBuf>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            server_url: "https://127.0.0.1:8443".to_owned(),
            token: None,
            poll_interval_ms: 500,
            timeout_s: 600,
            toolchain_version: BUILTIN_VERSION.to_owned(),
            ca_cert: None,
        }
    }
}

/// `$XDG_CONFIG_HOME/mizsrv/client.toml`, falling back to `~/.config`.
pub fn default_path(lookup: impl Fn(&str) -> Option<String>) -> Option<PathBuf> {
    let base = lookup("XDG_CONFIG_HOME")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| lookup("HOME").map(|h| Path::new(&h).join(".config")))?;
    Some(base.join("mizsrv").join("client.toml"))
}

impl ClientConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    /// Reads `path` if given, else the default path if it exists, then
    /// applies environment overrides.
    pub fn load(
        path: Option<&Path>,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let file = match path {
            Some(p) => Some(p.to_owned()),
            None => default_path(&lookup).filter(|p| p.exists()),
        };
        let mut cfg = match file {
            Some(p) => {
                let text = std::fs::read_to_string(&p).map_err(|source| ConfigError::Read {
                    path: p.clone(),
                    source,
                })?;
                Self::from_toml(&text, &p)?
            }
            None => ClientConfig::default(),
        };
        if let Some(url) = lookup(ENV_URL) {
            cfg.server_url = url;
        }
        if let Some(token) = lookup(ENV_TOKEN) {
            cfg.token = Some(token);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.poll_interval_ms < MIN_POLL_INTERVAL_MS {
            return Err(ConfigError::Invalid(format!(
                "poll_interval_ms must be at least {MIN_POLL_INTERVAL_MS}, got {}",
                self.poll_interval_ms
            )));
        }
        if self.timeout_s == 0 {
            return Err(ConfigError::Invalid("timeout_s must be positive".into()));
        }
        if !(self.server_url.starts_with("https://") || self.server_url.starts_with("http://")) {
            return Err(ConfigError::Invalid(format!(
                "server_url must be an http(s) URL, got {:?}",
                self.server_url
            )));
        }
        Ok(())
    }

    pub fn poll_interval(&self) -> Duration {
        Duration::from_millis(self.poll_interval_ms)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_s)
    }
}
