use std::path::Path;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use crate::cancel::CancelToken;
use crate::check::PassProgress;
use crate::runner::{self, OutcomeKind, ToolOutcome};
use crate::toolchain::{ToolRegistry, ToolchainError};
use crate::workspace::{validate_inline_filename, validate_relative_path, WorkspaceError, WorkspaceManager};

use super::{JobExecutor, JobRequest, JobSource, SubmitError};

const LEASE_RETRY: Duration = Duration::from_millis(50);

/// Runs jobs through the toolchain registry in server-side workspaces.
#[derive(Debug, Clone)]
pub struct ToolExecutor {
    registry: Arc<ToolRegistry>,
    workspaces: Arc<WorkspaceManager>,
}

impl ToolExecutor {
    pub fn new(registry: Arc<ToolRegistry>, workspaces: Arc<WorkspaceManager>) -> Self {
        ToolExecutor {
            registry,
            workspaces,
        }
    }

    pub fn registry(&self) -> &Arc<ToolRegistry> {
        &self.registry
    }
}

fn canceled() -> Result<ToolOutcome, String> {
    Ok(ToolOutcome {
        kind: OutcomeKind::Canceled,
        formatted_text: None,
    })
}

impl JobExecutor for ToolExecutor {
    fn validate(&self, req: &JobRequest) -> Result<(), SubmitError> {
        self.registry
            .resolve(&req.toolchain_version, req.command.as_str())
            .map_err(|e| match e {
                ToolchainError::UnknownVersion(v) => SubmitError::UnknownVersion(v),
                _ => SubmitError::UnknownCommand {
                    version: req.toolchain_version.clone(),
                    command: req.command.to_string(),
                },
            })?;
        match &req.source {
            JobSource::Inline { filename, .. } => validate_inline_filename(filename)
                .map_err(|_| SubmitError::PathViolation(filename.clone())),
            JobSource::Repo { repo, path } => {
                validate_relative_path(path).map_err(|_| SubmitError::PathViolation(path.clone()))?;
                repo.validate(self.workspaces.config().allow_insecure_http)
                    .map_err(|e| SubmitError::InvalidRepo(e.to_string()))
            }
        }
    }

    fn execute(
        &self,
        req: &JobRequest,
        progress: &mut dyn FnMut(PassProgress),
        cancel: &CancelToken,
    ) -> Result<ToolOutcome, String> {
        let template = self
            .registry
            .resolve(&req.toolchain_version, req.command.as_str())
            .map_err(|e| e.to_string())?;

        match &req.source {
            JobSource::Inline { filename, text } => {
                let ws = self
                    .workspaces
                    .inline(filename, text)
                    .map_err(|e| e.to_string())?;
                let inv = template
                    .bind(&ws.workspace().root, ws.article())
                    .with_options(req.options);
                Ok(runner::run(&inv, progress, cancel))
            }
            JobSource::Repo { repo, path } => {
                let ws = self
                    .workspaces
                    .materialize(repo)
                    .map_err(|e| e.to_string())?;
                let lease = loop {
                    if cancel.is_canceled() {
                        return canceled();
                    }
                    match self.workspaces.lease(&ws) {
                        Ok(l) => break l,
                        Err(WorkspaceError::Busy) => thread::sleep(LEASE_RETRY),
                        Err(e) => return Err(e.to_string()),
                    }
                };
                let article = lease.locate_article(path).map_err(|e| e.to_string())?;
                let root = std::fs::canonicalize(&ws.root).map_err(|e| e.to_string())?;
                let rel = article
                    .strip_prefix(&root)
                    .map(Path::to_path_buf)
                    .map_err(|_| format!("article {path:?} resolved outside the workspace"))?;
                let inv = template.bind(&root, rel).with_options(req.options);
                let outcome = runner::run(&inv, progress, cancel);
                drop(lease);
                Ok(outcome)
            }
        }
    }
}
