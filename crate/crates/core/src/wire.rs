//! JSON documents exchanged over the HTTP API.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::diag::{annotate, AnnotatedDiagnostic, MessageCatalog};
use crate::format::FormatConfig;
use crate::jobs::{JobId, JobState, JobStatus};
use crate::toolchain::Command;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub job_id: JobId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusDocument {
    pub job_id: JobId,
    pub command: Command,
    pub toolchain_version: String,
    pub state: JobState,
    pub pass: Option<String>,
    pub progress_percent: u8,
    /// Present once the job is terminal.
    pub errors: Option<Vec<AnnotatedDiagnostic>>,
    pub formatted_text: Option<String>,
    pub failure_reason: Option<String>,
    pub created_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    /// Present only while the job is queued or running.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poll_hint_ms: Option<u64>,
}

impl StatusDocument {
    pub fn build(st: JobStatus, catalog: &MessageCatalog, poll_hint_ms: u64) -> Self {
        let terminal = st.state.is_terminal();
        StatusDocument {
            job_id: st.id,
            command: st.command,
            toolchain_version: st.toolchain_version,
            state: st.state,
            pass: st.pass_name.map(|p| p.to_string()),
            progress_percent: st.progress_percent,
            errors: st.errors.as_ref().map(|e| annotate(e, catalog)),
            formatted_text: st.formatted_text,
            failure_reason: st.failure_reason,
            created_at: st.created_at,
            finished_at: st.finished_at,
            poll_hint_ms: (!terminal).then_some(poll_hint_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CancelResponse {
    pub canceled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionEntry {
    pub name: String,
    pub commands: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionsResponse {
    pub versions: Vec<VersionEntry>,
}

/// Body of the synchronous format and lint calls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextRequest {
    pub text: String,
    #[serde(default)]
    pub options: FormatConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatResponse {
    pub formatted: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintResponse {
    pub errors: Vec<AnnotatedDiagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub reason: String,
    pub message: String,
}
