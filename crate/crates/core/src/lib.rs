//! Core of a remote verification server for Mizar articles.
//!
//! The built-in toolchain ([`lexis`], [`check`], [`format`]) lets the whole
//! job protocol run without external binaries; [`runner`] can equally drive
//! external, versioned Mizar executables. [`jobs`] owns the asynchronous job
//! lifecycle and [`workspace`] materialises repository archives on the server.

pub mod cancel;
pub mod check;
pub mod diag;
pub mod format;
pub mod jobs;
pub mod lexis;
pub mod runner;
pub mod toolchain;
pub mod workspace;
pub mod wire;

pub use cancel::{CancelToken, Canceled};
pub use check::{check_references, check_structure, verify_article, PassName, PassProgress, Verifier};
pub use diag::{
    annotate, parse_err, parse_msg_catalog, serialize_err, AnnotatedDiagnostic, Diagnostic,
    ErrorList, MessageCatalog,
};
pub use format::{format, lint, FormatConfig};
pub use jobs::{
    EngineConfig, JobEngine, JobExecutor, JobId, JobRequest, JobSource, JobState, JobStatus,
    SubmitError, ToolExecutor,
};
pub use lexis::{line_index, tokenize, LineIndex, Token, TokenKind, TokenStream};
pub use runner::{OutcomeKind, ToolOutcome};
pub use toolchain::{
    resolve_toolchain, Command, ToolInvocation, ToolRegistry, ToolchainConfig, ToolchainVersion,
    BUILTIN_VERSION,
};
pub use workspace::{RepoRef, Workspace, WorkspaceConfig, WorkspaceManager};
