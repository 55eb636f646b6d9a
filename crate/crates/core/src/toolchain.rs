//! Versioned toolchain registry.
//!
//! Each named version maps command names to either the built-in toolchain or
//! an external executable with an argument template. External versions also
//! carry the pattern used to recognise progress lines on standard output.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::check::{PassName, PassProgress};
use crate::diag::{parse_msg_catalog, MessageCatalog};

pub const BUILTIN_VERSION: &str = "builtin-1.0";
pub const DEFAULT_PROGRESS_PATTERN: &str =
    r"^PASS (?P<pass>\S+) (?P<current>\d+)/(?P<total>\d+)\s*$";
pub const DEFAULT_ERR_SUFFIX: &str = ".err";

/// Commands a job can request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Verifier,
    Formatter,
    Linter,
}

impl Command {
    pub const ALL: [Command; 3] = [Command::Verifier, Command::Formatter, Command::Linter];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Verifier => "verifier",
            Command::Formatter => "formatter",
            Command::Linter => "linter",
        }
    }

    pub fn from_name(name: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.as_str() == name)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum ToolchainError {
    #[error("unknown toolchain version {0:?}")]
    UnknownVersion(String),
    #[error("toolchain {version:?} does not declare command {command:?}")]
    UndeclaredCommand { version: String, command: String },
    #[error("toolchain {version:?}: invalid progress pattern: {reason}")]
    BadPattern { version: String, reason: String },
    #[error("toolchain {version:?}: built-in backend has no command {command:?}")]
    BadBuiltin { version: String, command: String },
    #[error("toolchain {version:?}: command {command:?} has an empty program")]
    EmptyProgram { version: String, command: String },
    #[error("toolchain {version:?}: cannot load message catalog {path}: {reason}")]
    Catalog {
        version: String,
        path: PathBuf,
        reason: String,
    },
    #[error("toolchain registry is empty")]
    EmptyRegistry,
}

/// Regex with exactly the named captures `pass`, `current` and `total`.
#[derive(Clone, Debug)]
pub struct ProgressPattern(Regex);

impl ProgressPattern {
    pub fn new(pattern: &str) -> Result<Self, String> {
        let re = Regex::new(pattern).map_err(|e| e.to_string())?;
        let mut names: Vec<&str> = re.capture_names().flatten().collect();
        names.sort_unstable();
        if names != ["current", "pass", "total"] {
            return Err(format!(
                "expected exactly the named captures pass, current, total; found {names:?}"
            ));
        }
        Ok(ProgressPattern(re))
    }

    pub fn as_str(&self) -> &str {
        self.0.as_str()
    }
}

impl Default for ProgressPattern {
    fn default() -> Self {
        ProgressPattern::new(DEFAULT_PROGRESS_PATTERN).expect("default pattern is valid")
    }
}

/// Reads one line of tool output as a progress report. Lines that do not
/// match, name an unknown pass, or report a zero total yield `None`.
pub fn parse_progress_line(line: &str, pattern: &ProgressPattern) -> Option<PassProgress> {
    let caps = pattern.0.captures(line.trim_end_matches(['\r', '\n']))?;
    let pass: PassName = caps["pass"].parse().ok()?;
    let current: u32 = caps["current"].parse().ok()?;
    let total: u32 = caps["total"].parse().ok()?;
    if total == 0 {
        return None;
    }
    Some(PassProgress {
        pass,
        current: current.min(total),
        total,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CommandSpec {
    Builtin(Command),
    External { program: PathBuf, args: Vec<String> },
}

impl CommandSpec {
    pub fn is_builtin(&self) -> bool {
        matches!(self, CommandSpec::Builtin(_))
    }
}

#[derive(Clone, Debug)]
pub struct ToolchainVersion {
    pub name: String,
    pub commands: BTreeMap<String, CommandSpec>,
    pub progress_pattern: ProgressPattern,
    pub err_suffix: String,
    pub prelude_dir: Option<PathBuf>,
    pub messages: MessageCatalog,
    /// Pacing knob for the built-in verifier (per line, per pass).
    pub line_delay: Duration,
}

impl ToolchainVersion {
    /// The built-in toolchain with all three commands.
    pub fn builtin(name: impl Into<String>) -> Self {
        ToolchainVersion {
            name: name.into(),
            commands: Command::ALL
                .into_iter()
                .map(|c| (c.as_str().to_owned(), CommandSpec::Builtin(c)))
                .collect(),
            progress_pattern: ProgressPattern::default(),
            err_suffix: DEFAULT_ERR_SUFFIX.to_owned(),
            prelude_dir: None,
            messages: MessageCatalog::builtin(),
            line_delay: Duration::ZERO,
        }
    }

    pub fn with_line_delay(mut self, delay: Duration) -> Self {
        self.line_delay = delay;
        self
    }

    pub fn command_names(&self) -> Vec<String> {
        self.commands.keys().cloned().collect()
    }
}

/// One `[toolchains.<name>]` table of the server configuration.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolchainConfig {
    /// Shorthand for declaring verifier, formatter and linter as built-in.
    pub builtin: bool,
    pub commands: BTreeMap<String, CommandConfig>,
    pub progress_pattern: Option<String>,
    pub err_suffix: Option<String>,
    pub prelude_dir: Option<PathBuf>,
    /// Optional `.msg` catalog layered over the built-in one.
    pub messages: Option<PathBuf>,
    pub line_delay_us: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandConfig {
    /// Executable path, or the literal `builtin`.
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl ToolchainConfig {
    pub fn build(&self, name: &str) -> Result<ToolchainVersion, ToolchainError> {
        let mut version = if self.builtin {
            ToolchainVersion::builtin(name)
        } else {
            ToolchainVersion {
                commands: BTreeMap::new(),
                ..ToolchainVersion::builtin(name)
            }
        };
        for (cmd, spec) in &self.commands {
            let spec = if spec.program == "builtin" {
                let c = Command::from_name(cmd).ok_or_else(|| ToolchainError::BadBuiltin {
                    version: name.to_owned(),
                    command: cmd.clone(),
                })?;
                CommandSpec::Builtin(c)
            } else if spec.program.trim().is_empty() {
                return Err(ToolchainError::EmptyProgram {
                    version: name.to_owned(),
                    command: cmd.clone(),
                });
            } else {
                CommandSpec::External {
                    program: PathBuf::from(&spec.program),
                    args: spec.args.clone(),
                }
            };
            version.commands.insert(cmd.clone(), spec);
        }
        if let Some(p) = &self.progress_pattern {
            version.progress_pattern =
                ProgressPattern::new(p).map_err(|reason| ToolchainError::BadPattern {
                    version: name.to_owned(),
                    reason,
                })?;
        }
        if let Some(s) = &self.err_suffix {
            version.err_suffix = s.clone();
        }
        version.prelude_dir = self.prelude_dir.clone();
        if let Some(path) = &self.messages {
            let catalog_err = |reason: String| ToolchainError::Catalog {
                version: name.to_owned(),
                path: path.clone(),
                reason,
            };
            let data = std::fs::read(path).map_err(|e| catalog_err(e.to_string()))?;
            let extra = parse_msg_catalog(&data).map_err(|e| catalog_err(e.to_string()))?;
            version.messages.merge(&extra);
        }
        version.line_delay = Duration::from_micros(self.line_delay_us);
        Ok(version)
    }
}

/// A resolved version/command pair, not yet bound to a workspace.
#[derive(Clone, Debug)]
pub struct InvocationTemplate {
    pub version: Arc<ToolchainVersion>,
    pub command: String,
    pub spec: CommandSpec,
}

impl InvocationTemplate {
    pub fn bind(self, working_dir: impl Into<PathBuf>, article_path: impl Into<PathBuf>) -> ToolInvocation {
        ToolInvocation {
            version: self.version,
            command: self.command,
            spec: self.spec,
            working_dir: working_dir.into(),
            article_path: article_path.into(),
            options: Default::default(),
        }
    }
}

/// A command bound to a workspace directory and an article under `text/`.
#[derive(Clone, Debug)]
pub struct ToolInvocation {
    pub version: Arc<ToolchainVersion>,
    pub command: String,
    pub spec: CommandSpec,
    pub working_dir: PathBuf,
    /// Relative to `working_dir`, e.g. `text/article.miz`.
    pub article_path: PathBuf,
    pub options: crate::format::FormatConfig,
}

impl ToolInvocation {
    pub fn with_options(mut self, options: crate::format::FormatConfig) -> Self {
        self.options = options;
        self
    }

    pub fn article_abs(&self) -> PathBuf {
        self.working_dir.join(&self.article_path)
    }

    /// `<article dir>/<stem><err_suffix>`.
    pub fn err_path(&self) -> PathBuf {
        let article = self.article_abs();
        let stem = article
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let dir = article.parent().unwrap_or(Path::new("."));
        dir.join(format!("{stem}{}", self.version.err_suffix))
    }
}

#[derive(Clone, Debug, Default)]
pub struct ToolRegistry {
    versions: BTreeMap<String, Arc<ToolchainVersion>>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding only `builtin-1.0`.
    pub fn builtin() -> Self {
        let mut r = ToolRegistry::new();
        r.insert(ToolchainVersion::builtin(BUILTIN_VERSION));
        r
    }

    pub fn from_config(tables: &BTreeMap<String, ToolchainConfig>) -> Result<Self, ToolchainError> {
        let mut r = ToolRegistry::new();
        for (name, cfg) in tables {
            r.insert(cfg.build(name)?);
        }
        if r.is_empty() {
            return Err(ToolchainError::EmptyRegistry);
        }
        Ok(r)
    }

    pub fn insert(&mut self, version: ToolchainVersion) {
        self.versions.insert(version.name.clone(), Arc::new(version));
    }

    pub fn get(&self, name: &str) -> Option<&Arc<ToolchainVersion>> {
        self.versions.get(name)
    }

    pub fn versions(&self) -> impl Iterator<Item = &Arc<ToolchainVersion>> {
        self.versions.values()
    }

    pub fn is_empty(&self) -> bool {
        self.versions.is_empty()
    }

    pub fn resolve(&self, version: &str, command: &str) -> Result<InvocationTemplate, ToolchainError> {
        let v = self
            .versions
            .get(version)
            .ok_or_else(|| ToolchainError::UnknownVersion(version.to_owned()))?;
        let spec = v
            .commands
            .get(command)
            .ok_or_else(|| ToolchainError::UndeclaredCommand {
                version: version.to_owned(),
                command: command.to_owned(),
            })?;
        Ok(InvocationTemplate {
            version: Arc::clone(v),
            command: command.to_owned(),
            spec: spec.clone(),
        })
    }
}

pub fn resolve_toolchain(
    registry: &ToolRegistry,
    version: &str,
    command: &str,
) -> Result<InvocationTemplate, ToolchainError> {
    registry.resolve(version, command)
}
