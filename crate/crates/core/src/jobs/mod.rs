//! Job lifecycle: submit returns an id at once, a bounded pool of worker
//! threads executes jobs in FIFO order, clients poll status snapshots and may
//! cancel, and finished jobs are reaped after a TTL.
//!
//! ```text
//! Queued ──► Running ──► Succeeded | CompletedWithErrors | Failed | Canceled
//!    └─────────────────► Canceled
//! ```

mod executor;
mod id;

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cancel::CancelToken;
use crate::check::{PassName, PassProgress};
use crate::diag::ErrorList;
use crate::format::FormatConfig;
use crate::runner::{OutcomeKind, ToolOutcome};
use crate::toolchain::Command;
use crate::workspace::RepoRef;

pub use executor::ToolExecutor;
pub use id::{BadJobId, JobId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JobSource {
    Inline {
        filename: String,
        text: String,
    },
    Repo {
        #[serde(flatten)]
        repo: RepoRef,
        path: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobRequest {
    pub command: Command,
    pub toolchain_version: String,
    pub source: JobSource,
    #[serde(default)]
    pub options: FormatConfig,
}

impl JobRequest {
    pub fn inline(command: Command, version: &str, filename: &str, text: &str) -> Self {
        JobRequest {
            command,
            toolchain_version: version.to_owned(),
            source: JobSource::Inline {
                filename: filename.to_owned(),
                text: text.to_owned(),
            },
            options: FormatConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Succeeded,
    CompletedWithErrors,
    Failed,
    Canceled,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        !matches!(self, JobState::Queued | JobState::Running)
    }

    pub fn can_become(self, next: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, next),
            (Queued, Running) | (Queued, Canceled) | (Running, Succeeded | CompletedWithErrors | Failed | Canceled)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Queued => "queued",
            JobState::Running => "running",
            JobState::Succeeded => "succeeded",
            JobState::CompletedWithErrors => "completed_with_errors",
            JobState::Failed => "failed",
            JobState::Canceled => "canceled",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: JobId,
    pub command: Command,
    pub toolchain_version: String,
    pub state: JobState,
    pub pass_name: Option<PassName>,
    pub progress_percent: u8,
    /// Present once the job is terminal.
    pub errors: Option<ErrorList>,
    pub formatted_text: Option<String>,
    pub failure_reason: Option<String>,
    pub created_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
}

/// Overall percent from a per-pass report, all passes weighted equally.
pub fn overall_percent(p: &PassProgress) -> u8 {
    let total = u64::from(p.total.max(1));
    let current = u64::from(p.current.min(p.total));
    let passes = PassName::ALL.len() as u64;
    let done = p.pass.index() as u64;
    ((100 * (done * total + current)) / (passes * total)).min(100) as u8
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub workers: usize,
    /// Maximum number of live (queued or running) jobs.
    pub queue_cap: usize,
    pub max_inline_bytes: usize,
    pub job_ttl: Duration,
    pub reap_interval: Duration,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            workers: thread::available_parallelism().map_or(4, |n| n.get()),
            queue_cap: 100,
            max_inline_bytes: 2 * 1024 * 1024,
            job_ttl: Duration::from_secs(3600),
            reap_interval: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubmitError {
    #[error("unknown toolchain version {0:?}")]
    UnknownVersion(String),
    #[error("toolchain {version:?} does not declare command {command:?}")]
    UnknownCommand { version: String, command: String },
    #[error("path {0:?} is not confined to the text directory")]
    PathViolation(String),
    #[error("inline source is {size} bytes, limit is {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("invalid repository reference: {0}")]
    InvalidRepo(String),
    #[error("job queue is full ({0} live jobs)")]
    QueueFull(usize),
    #[error("server is shutting down")]
    ShuttingDown,
}

impl SubmitError {
    /// Stable machine-readable reason code.
    pub fn reason(&self) -> &'static str {
        match self {
            SubmitError::UnknownVersion(_) => "unknown_version",
            SubmitError::UnknownCommand { .. } => "unknown_command",
            SubmitError::PathViolation(_) => "path_violation",
            SubmitError::TooLarge { .. } => "too_large",
            SubmitError::InvalidOptions(_) => "invalid_options",
            SubmitError::InvalidRepo(_) => "invalid_repo",
            SubmitError::QueueFull(_) => "queue_full",
            SubmitError::ShuttingDown => "shutting_down",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("job {0} not found")]
pub struct NotFound(pub JobId);

/// What a worker does with a job. The production implementation is
/// [`ToolExecutor`]; tests plug in scripted ones.
pub trait JobExecutor: Send + Sync + 'static {
    /// Request checks that need executor knowledge (registry, path rules).
    fn validate(&self, _req: &JobRequest) -> Result<(), SubmitError> {
        Ok(())
    }

    /// `Err` carries a failure reason for infrastructure errors.
    fn execute(
        &self,
        req: &JobRequest,
        progress: &mut dyn FnMut(PassProgress),
        cancel: &CancelToken,
    ) -> Result<ToolOutcome, String>;
}

struct JobEntry {
    request: Arc<JobRequest>,
    status: JobStatus,
    cancel: CancelToken,
}

#[derive(Default)]
struct Registry {
    jobs: HashMap<JobId, JobEntry>,
    queue: VecDeque<JobId>,
    live: usize,
    shutdown: bool,
}

impl Registry {
    fn transition(&mut self, id: JobId, next: JobState) {
        let entry = self.jobs.get_mut(&id).expect("transition on a live job");
        let prev = entry.status.state;
        debug_assert!(prev.can_become(next), "{prev:?} -> {next:?}");
        entry.status.state = next;
        if next.is_terminal() {
            entry.status.finished_at = Some(Utc::now());
            if entry.status.errors.is_none() {
                entry.status.errors = Some(ErrorList::new());
            }
            self.live -= 1;
        }
    }
}

struct Shared {
    cfg: EngineConfig,
    executor: Arc<dyn JobExecutor>,
    registry: Mutex<Registry>,
    work: Condvar,
    stop: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Registry> {
        self.registry.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn report_progress(&self, id: JobId, p: &PassProgress) -> Option<u8> {
        let mut reg = self.lock();
        let entry = reg.jobs.get_mut(&id)?;
        let status = &mut entry.status;
        if status.state.is_terminal() {
            return Some(status.progress_percent);
        }
        let pct = overall_percent(p);
        if pct >= status.progress_percent {
            status.progress_percent = pct;
        }
        if status.pass_name.is_none_or(|cur| p.pass >= cur) {
            status.pass_name = Some(p.pass);
        }
        Some(status.progress_percent)
    }

    fn worker(self: Arc<Self>) {
        loop {
            let (id, request, cancel) = {
                let mut reg = self.lock();
                let id = loop {
                    if reg.shutdown {
                        return;
                    }
                    if let Some(id) = reg.queue.pop_front() {
                        break id;
                    }
                    reg = self.work.wait(reg).unwrap_or_else(|e| e.into_inner());
                };
                let Some(entry) = reg.jobs.get(&id) else {
                    continue;
                };
                if entry.status.state != JobState::Queued {
                    continue;
                }
                let request = Arc::clone(&entry.request);
                let cancel = entry.cancel.clone();
                reg.transition(id, JobState::Running);
                (id, request, cancel)
            };

            let mut sink = |p: PassProgress| {
                self.report_progress(id, &p);
            };
            let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                self.executor.execute(&request, &mut sink, &cancel)
            }))
            .unwrap_or_else(|_| Err("executor panicked".to_owned()));
            self.finish(id, &cancel, result);
        }
    }

    fn finish(&self, id: JobId, cancel: &CancelToken, result: Result<ToolOutcome, String>) {
        let mut reg = self.lock();
        let Some(entry) = reg.jobs.get_mut(&id) else {
            return;
        };
        if entry.status.state.is_terminal() {
            return;
        }
        let status = &mut entry.status;
        let next = if cancel.is_canceled() {
            JobState::Canceled
        } else {
            match result {
                Err(reason) => {
                    status.failure_reason = Some(reason);
                    JobState::Failed
                }
                Ok(outcome) => {
                    status.formatted_text = outcome.formatted_text;
                    match outcome.kind {
                        OutcomeKind::Clean => JobState::Succeeded,
                        OutcomeKind::Diagnostics(errs) if errs.is_empty() => JobState::Succeeded,
                        OutcomeKind::Diagnostics(errs) => {
                            status.errors = Some(errs);
                            JobState::CompletedWithErrors
                        }
                        OutcomeKind::ToolFailure { exit_code, stderr } => {
                            status.failure_reason = Some(match exit_code {
                                Some(code) => format!("tool exited with status {code}: {stderr}"),
                                None => stderr,
                            });
                            JobState::Failed
                        }
                        OutcomeKind::Canceled => JobState::Canceled,
                    }
                }
            }
        };
        if matches!(next, JobState::Succeeded | JobState::CompletedWithErrors) {
            status.progress_percent = 100;
        }
        reg.transition(id, next);
    }

    fn reap_expired(&self, now: DateTime<Utc>) -> usize {
        let ttl = chrono::Duration::from_std(self.cfg.job_ttl).unwrap_or(chrono::Duration::MAX);
        let mut reg = self.lock();
        let before = reg.jobs.len();
        reg.jobs.retain(|_, e| match e.status.finished_at {
            Some(done) if e.status.state.is_terminal() => now.signed_duration_since(done) <= ttl,
            _ => true,
        });
        before - reg.jobs.len()
    }
}

pub struct JobEngine {
    shared: Arc<Shared>,
    threads: Mutex<Vec<JoinHandle<()>>>,
}

impl std::fmt::Debug for JobEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JobEngine")
            .field("workers", &self.shared.cfg.workers)
            .finish()
    }
}

impl JobEngine {
    pub fn new(cfg: EngineConfig, executor: Arc<dyn JobExecutor>) -> Self {
        let shared = Arc::new(Shared {
            cfg,
            executor,
            registry: Mutex::new(Registry::default()),
            work: Condvar::new(),
            stop: Condvar::new(),
        });
        let mut threads = Vec::new();
        for n in 0..shared.cfg.workers {
            let s = Arc::clone(&shared);
            threads.push(
                thread::Builder::new()
                    .name(format!("job-worker-{n}"))
                    .spawn(move || s.worker())
                    .expect("spawn worker"),
            );
        }
        if !shared.cfg.reap_interval.is_zero() {
            let s = Arc::clone(&shared);
            threads.push(
                thread::Builder::new()
                    .name("job-reaper".to_owned())
                    .spawn(move || loop {
                        let reg = s.lock();
                        // Checked under the lock so a shutdown before the wait is not lost.
                        if reg.shutdown {
                            return;
                        }
                        let (reg, _) = s
                            .stop
                            .wait_timeout(reg, s.cfg.reap_interval)
                            .unwrap_or_else(|e| e.into_inner());
                        if reg.shutdown {
                            return;
                        }
                        drop(reg);
                        let n = s.reap_expired(Utc::now());
                        if n > 0 {
                            tracing::debug!(removed = n, "reaped expired jobs");
                        }
                    })
                    .expect("spawn reaper"),
            );
        }
        JobEngine {
            shared,
            threads: Mutex::new(threads),
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.shared.cfg
    }

    pub fn submit(&self, req: JobRequest) -> Result<JobId, SubmitError> {
        if let JobSource::Inline { text, .. } = &req.source {
            if text.len() > self.shared.cfg.max_inline_bytes {
                return Err(SubmitError::TooLarge {
                    size: text.len(),
                    limit: self.shared.cfg.max_inline_bytes,
                });
            }
        }
        req.options
            .validate()
            .map_err(|e| SubmitError::InvalidOptions(e.to_string()))?;
        self.shared.executor.validate(&req)?;

        let mut reg = self.shared.lock();
        if reg.shutdown {
            return Err(SubmitError::ShuttingDown);
        }
        if reg.live >= self.shared.cfg.queue_cap {
            return Err(SubmitError::QueueFull(reg.live));
        }
        let id = loop {
            let id = JobId::generate();
            if !reg.jobs.contains_key(&id) {
                break id;
            }
        };
        let status = JobStatus {
            id,
            command: req.command,
            toolchain_version: req.toolchain_version.clone(),
            state: JobState::Queued,
            pass_name: None,
            progress_percent: 0,
            errors: None,
            formatted_text: None,
            failure_reason: None,
            created_at: Utc::now(),
            finished_at: None,
        };
        reg.jobs.insert(
            id,
            JobEntry {
                request: Arc::new(req),
                status,
                cancel: CancelToken::new(),
            },
        );
        reg.queue.push_back(id);
        reg.live += 1;
        drop(reg);
        self.shared.work.notify_all();
        Ok(id)
    }

    pub fn status(&self, id: JobId) -> Result<JobStatus, NotFound> {
        self.shared
            .lock()
            .jobs
            .get(&id)
            .map(|e| e.status.clone())
            .ok_or(NotFound(id))
    }

    /// `Ok(false)` when the job is already terminal.
    pub fn cancel(&self, id: JobId) -> Result<bool, NotFound> {
        let mut reg = self.shared.lock();
        let entry = reg.jobs.get(&id).ok_or(NotFound(id))?;
        match entry.status.state {
            JobState::Queued => {
                entry.cancel.cancel();
                reg.queue.retain(|q| *q != id);
                reg.transition(id, JobState::Canceled);
                Ok(true)
            }
            JobState::Running => {
                entry.cancel.cancel();
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    pub fn report_progress(&self, id: JobId, p: PassProgress) -> Result<u8, NotFound> {
        self.shared.report_progress(id, &p).ok_or(NotFound(id))
    }

    pub fn reap_expired(&self, now: DateTime<Utc>) -> usize {
        self.shared.reap_expired(now)
    }

    pub fn live_jobs(&self) -> usize {
        self.shared.lock().live
    }

    /// Cancels everything and joins the worker threads.
    pub fn shutdown(&self) {
        {
            let mut reg = self.shared.lock();
            reg.shutdown = true;
            for e in reg.jobs.values() {
                e.cancel.cancel();
            }
        }
        self.shared.work.notify_all();
        self.shared.stop.notify_all();
        let threads: Vec<_> = self.threads.lock().unwrap().drain(..).collect();
        for t in threads {
            let _ = t.join();
        }
    }
}

impl Drop for JobEngine {
    fn drop(&mut self) {
        self.shutdown();
    }
}
