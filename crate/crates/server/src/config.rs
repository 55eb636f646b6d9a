//! Server configuration: a TOML file plus environment overrides.
//!
//! ```toml
//! bind = "0.0.0.0:8443"
//! mode = "production"
//! api_tokens = ["..."]
//! workspace_area = "/var/lib/mizsrv"
//!
//! [tls]
//! cert = "/etc/mizsrv/cert.pem"
//! key = "/etc/mizsrv/key.pem"
//!
//! [limits]
//! workers = 8
//!
//! [toolchains."builtin-1.0"]
//! builtin = true
//!
//! [toolchains."mizar-8.1.14"]
//! prelude_dir = "/opt/mizar/8.1.14"
//! commands.verifier = { program = "/opt/mizar/8.1.14/bin/verifier", args = ["-q", "{article}"] }
//! ```

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use mizsrv_core::toolchain::ToolchainError;
use mizsrv_core::{
    EngineConfig, ToolRegistry, ToolchainConfig, WorkspaceConfig, BUILTIN_VERSION,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_BIND: &str = "MIZSRV_BIND";
pub const ENV_TOKEN: &str = "MIZSRV_TOKEN";
pub const ENV_TLS_CERT: &str = "MIZSRV_TLS_CERT";
pub const ENV_TLS_KEY: &str = "MIZSRV_TLS_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Toolchain(#[from] ToolchainError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Development,
    Production,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsConfig {
    pub cert: PathBuf,
    pub key: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub workers: Option<usize>,
    pub queue_cap: usize,
    pub max_inline_bytes: usize,
    pub job_ttl_secs: u64,
    pub reap_interval_secs: u64,
    pub poll_hint_ms: u64,
}

impl Default for Limits {
    fn default() -> Self {
        let engine = EngineConfig::default();
        Limits {
            workers: None,
            queue_cap: engine.queue_cap,
            max_inline_bytes: engine.max_inline_bytes,
            job_ttl_secs: engine.job_ttl.as_secs(),
            reap_interval_secs: engine.reap_interval.as_secs(),
            poll_hint_ms: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkspaceLimits {
    pub max_archive_bytes: u64,
    pub max_unpacked_bytes: u64,
    pub mutable_ref_max_age_secs: u64,
    pub allow_insecure_http: bool,
    pub http_timeout_secs: u64,
}

impl Default for WorkspaceLimits {
    fn default() -> Self {
        let ws = WorkspaceConfig::new("");
        WorkspaceLimits {
            max_archive_bytes: ws.max_archive_bytes,
            max_unpacked_bytes: ws.max_unpacked_bytes,
            mutable_ref_max_age_secs: ws.mutable_ref_max_age.as_secs(),
            allow_insecure_http: ws.allow_insecure_http,
            http_timeout_secs: ws.http_timeout.as_secs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub mode: Mode,
    pub api_tokens: Vec<String>,
    pub tls: Option<TlsConfig>,
    pub workspace_area: PathBuf,
    pub limits: Limits,
    pub workspace: WorkspaceLimits,
    /// Absent means a single built-in version; present but empty is an error.
    pub toolchains: Option<BTreeMap<String, ToolchainConfig>>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8443)),
            mode: Mode::Development,
            api_tokens: Vec::new(),
            tls: None,
            workspace_area: std::env::temp_dir().join("mizsrv"),
            limits: Limits::default(),
            workspace: WorkspaceLimits::default(),
            toolchains: None,
        }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Applies `MIZSRV_*` overrides from `lookup` (normally `std::env::var`).
    pub fn apply_env(
        &mut self,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        if let Some(bind) = lookup(ENV_BIND) {
            self.bind = bind
                .parse()
                .map_err(|e| invalid("MIZSRV_BIND", format!("{bind:?}: {e}")))?;
        }
        if let Some(token) = lookup(ENV_TOKEN) {
            self.api_tokens = vec![token];
        }
        match (lookup(ENV_TLS_CERT), lookup(ENV_TLS_KEY)) {
            (None, None) => {}
            (Some(cert), Some(key)) => {
                self.tls = Some(TlsConfig {
                    cert: cert.into(),
                    key: key.into(),
                })
            }
            _ => {
                return Err(invalid(
                    "MIZSRV_TLS_CERT/MIZSRV_TLS_KEY",
                    "both or neither must be set",
                ))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.api_tokens.is_empty() {
            return Err(invalid("api_tokens", "at least one token is required"));
        }
        if self.api_tokens.iter().any(|t| t.trim().is_empty()) {
            return Err(invalid("api_tokens", "tokens must be non-empty"));
        }
        if self.mode == Mode::Production && self.tls.is_none() {
            return Err(invalid("tls", "production mode requires a certificate and key"));
        }
        if self.limits.workers == Some(0) {
            return Err(invalid("limits.workers", "must be at least 1"));
        }
        if self.limits.queue_cap == 0 {
            return Err(invalid("limits.queue_cap", "must be at least 1"));
        }
        if self.limits.poll_hint_ms < 50 {
            return Err(invalid("limits.poll_hint_ms", "must be at least 50"));
        }
        if matches!(&self.toolchains, Some(t) if t.is_empty()) {
            return Err(invalid("toolchains", "at least one version must be declared"));
        }
        Ok(())
    }

    pub fn registry(&self) -> Result<ToolRegistry, ConfigError> {
        match &self.toolchains {
            None => Ok(ToolRegistry::builtin()),
            Some(tables) => Ok(ToolRegistry::from_config(tables)?),
        }
    }

    pub fn engine_config(&self) -> EngineConfig {
        let defaults = EngineConfig::default();
        EngineConfig {
            workers: self.limits.workers.unwrap_or(defaults.workers),
            queue_cap: self.limits.queue_cap,
            max_inline_bytes: self.limits.max_inline_bytes,
            job_ttl: Duration::from_secs(self.limits.job_ttl_secs),
            reap_interval: Duration::from_secs(self.limits.reap_interval_secs),
        }
    }

    pub fn workspace_config(&self) -> WorkspaceConfig {
        WorkspaceConfig {
            area: self.workspace_area.clone(),
            max_archive_bytes: self.workspace.max_archive_bytes,
            max_unpacked_bytes: self.workspace.max_unpacked_bytes,
            mutable_ref_max_age: Duration::from_secs(self.workspace.mutable_ref_max_age_secs),
            allow_insecure_http: self.workspace.allow_insecure_http,
            http_timeout: Duration::from_secs(self.workspace.http_timeout_secs),
        }
    }

    /// Minimal development configuration: one token, built-in toolchain.
    pub fn for_tests(token: &str, area: impl Into<PathBuf>) -> Self {
        ServerConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 0)),
            api_tokens: vec![token.to_owned()],
            workspace_area: area.into(),
            ..ServerConfig::default()
        }
    }
}

/// Name of the version every default configuration provides.
pub const DEFAULT_VERSION: &str = BUILTIN_VERSION;
