//! Client side of the job protocol: submit, poll with a progress bar,
//! cancel, format, lint and list versions.
//!
//! Exit codes: 0 success, 1 diagnostics reported (or `format --check`
//! found changes), 2 job failed, was canceled or timed out, 3 transport,
//! authentication, configuration or request errors.

pub mod client;
pub mod config;
pub mod render;

use std::io::Write;
use std::path::Path;
use std::thread;
use std::time::Instant;

use mizsrv_core::wire::StatusDocument;
use mizsrv_core::{Command, FormatConfig, JobRequest, JobSource, JobState, RepoRef};

pub use client::{ApiClient, ClientError};
pub use config::ClientConfig;
pub use render::{diagnostic_line, progress_line, ProgressView};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Diagnostics = 1,
    Failed = 2,
    Transport = 3,
}

impl Exit {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn for_state(state: JobState) -> Exit {
        match state {
            JobState::Succeeded | JobState::Queued | JobState::Running => Exit::Ok,
            JobState::CompletedWithErrors => Exit::Diagnostics,
            JobState::Failed | JobState::Canceled => Exit::Failed,
        }
    }
}

/// Output sinks; `live` redraws the progress line in place.
pub struct Term<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
    pub live: bool,
    pub show_progress: bool,
}

impl Term<'_> {
    fn progress(&mut self, line: &str) {
        if !self.show_progress {
            return;
        }
        if self.live {
            let _ = write!(self.err, "\r{line}");
        } else {
            let _ = writeln!(self.err, "{line}");
        }
        let _ = self.err.flush();
    }

    fn end_progress(&mut self, drew: bool) {
        if self.show_progress && self.live && drew {
            let _ = writeln!(self.err);
        }
    }

    fn error(&mut self, msg: impl std::fmt::Display) {
        let _ = writeln!(self.err, "mizsrv: {msg}");
    }
}

fn fail(term: &mut Term<'_>, e: ClientError) -> Exit {
    term.error(e);
    Exit::Transport
}

pub enum VerifySource<'a> {
    File(&'a Path),
    Repo {
        template: String,
        git_ref: String,
        path: String,
        token: Option<String>,
    },
}

/// Submits a verifier job and watches it to completion.
pub fn cmd_verify(
    client: &ApiClient,
    cfg: &ClientConfig,
    source: VerifySource<'_>,
    term: &mut Term<'_>,
) -> Exit {
    let (display, source) = match source {
        VerifySource::File(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    term.error(format!("{}: {e}", path.display()));
                    return Exit::Transport;
                }
            };
            let filename = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "article.miz".to_owned());
            (
                path.display().to_string(),
                JobSource::Inline { filename, text },
            )
        }
        VerifySource::Repo {
            template,
            git_ref,
            path,
            token,
        } => {
            let mut repo = RepoRef::new(template, git_ref);
            if let Some(t) = token {
                repo = repo.with_token(t);
            }
            (path.clone(), JobSource::Repo { repo, path })
        }
    };
    let req = JobRequest {
        command: Command::Verifier,
        toolchain_version: cfg.toolchain_version.clone(),
        source,
        options: FormatConfig::default(),
    };
    let id = match client.submit(&req) {
        Ok(id) => id.to_string(),
        Err(e) => return fail(term, e),
    };
    let st = match watch(client, cfg, &id, term) {
        Ok(Some(st)) => st,
        Ok(None) => return Exit::Failed,
        Err(e) => return fail(term, e),
    };
    report(&display, &st, term);
    Exit::for_state(st.state)
}

/// Polls until terminal. `Ok(None)` means the timeout fired and the job was
/// canceled.
pub fn watch(
    client: &ApiClient,
    cfg: &ClientConfig,
    id: &str,
    term: &mut Term<'_>,
) -> Result<Option<StatusDocument>, ClientError> {
    let started = Instant::now();
    let mut view = ProgressView::new();
    let mut drew = false;
    loop {
        let st = client.status(id)?;
        if let Some(line) = view.update(st.pass.as_deref(), st.progress_percent) {
            term.progress(&line);
            drew = true;
        }
        if st.state.is_terminal() {
            term.end_progress(drew);
            return Ok(Some(st));
        }
        if started.elapsed() >= cfg.timeout() {
            term.end_progress(drew);
            let _ = client.cancel(id);
            term.error(format!(
                "timed out after {}s; job {id} canceled",
                cfg.timeout_s
            ));
            return Ok(None);
        }
        thread::sleep(cfg.poll_interval());
    }
}

fn report(display: &str, st: &StatusDocument, term: &mut Term<'_>) {
    for d in st.errors.iter().flatten() {
        let _ = writeln!(term.out, "{}", diagnostic_line(display, d));
    }
    match st.state {
        JobState::Failed => term.error(format!(
            "job failed: {}",
            st.failure_reason.as_deref().unwrap_or("no reason given")
        )),
        JobState::Canceled => term.error("job was canceled"),
        _ => {}
    }
}

pub fn cmd_status(client: &ApiClient, id: &str, term: &mut Term<'_>) -> Exit {
    let st = match client.status(id) {
        Ok(st) => st,
        Err(e) => return fail(term, e),
    };
    let _ = writeln!(
        term.out,
        "{} {} {} {}",
        st.job_id,
        st.command,
        st.state.as_str(),
        progress_line(st.pass.as_deref(), st.progress_percent)
    );
    report(&st.job_id.to_string(), &st, term);
    Exit::for_state(st.state)
}

pub fn cmd_cancel(client: &ApiClient, id: &str, term: &mut Term<'_>) -> Exit {
    match client.cancel(id) {
        Ok(true) => {
            let _ = writeln!(term.out, "canceled {id}");
            Exit::Ok
        }
        Ok(false) => {
            let _ = writeln!(term.out, "{id} already finished");
            Exit::Ok
        }
        Err(e) => fail(term, e),
    }
}

pub fn cmd_versions(client: &ApiClient, term: &mut Term<'_>) -> Exit {
    match client.versions() {
        Ok(v) => {
            for entry in v.versions {
                let _ = writeln!(term.out, "{}\t{}", entry.name, entry.commands.join(","));
            }
            Exit::Ok
        }
        Err(e) => fail(term, e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormatMode {
    Print,
    Check,
    InPlace,
}

pub fn cmd_format(
    client: &ApiClient,
    path: &Path,
    mode: FormatMode,
    options: FormatConfig,
    term: &mut Term<'_>,
) -> Exit {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            term.error(format!("{}: {e}", path.display()));
            return Exit::Transport;
        }
    };
    let formatted = match client.format(&text, options) {
        Ok(f) => f,
        Err(e) => return fail(term, e),
    };
    match mode {
        FormatMode::Print => {
            let _ = term.out.write_all(formatted.as_bytes());
            Exit::Ok
        }
        FormatMode::Check if formatted == text => Exit::Ok,
        FormatMode::Check => {
            term.error(format!("{}: not formatted", path.display()));
            Exit::Diagnostics
        }
        FormatMode::InPlace => {
            if formatted != text {
                if let Err(e) = std::fs::write(path, formatted) {
                    term.error(format!("{}: {e}", path.display()));
                    return Exit::Transport;
                }
            }
            Exit::Ok
        }
    }
}

pub fn cmd_lint(
    client: &ApiClient,
    path: &Path,
    options: FormatConfig,
    term: &mut Term<'_>,
) -> Exit {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            term.error(format!("{}: {e}", path.display()));
            return Exit::Transport;
        }
    };
    match client.lint(&text, options) {
        Ok(r) => {
            let display = path.display().to_string();
            for d in &r.errors {
                let _ = writeln!(term.out, "{}", diagnostic_line(&display, d));
            }
            if r.errors.is_empty() {
                Exit::Ok
            } else {
                Exit::Diagnostics
            }
        }
        Err(e) => fail(term, e),
    }
}
