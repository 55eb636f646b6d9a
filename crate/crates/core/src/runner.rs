//! Executes a bound [`ToolInvocation`] on the built-in toolchain or as an
//! external process, and normalises the result into a [`ToolOutcome`].

use std::io::{BufRead, BufReader, Read};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Child, Command as Process, ExitStatus, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use crate::cancel::CancelToken;
use crate::check::{PassProgress, Verifier};
use crate::diag::{parse_err, ErrorList};
use crate::format::{format, lint};
use crate::toolchain::{parse_progress_line, Command, CommandSpec, ToolInvocation};

/// Bytes of stderr kept in a failure report.
pub const STDERR_LIMIT: usize = 4096;

const POLL: Duration = Duration::from_millis(20);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OutcomeKind {
    Clean,
    Diagnostics(ErrorList),
    ToolFailure {
        exit_code: Option<i32>,
        stderr: String,
    },
    Canceled,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToolOutcome {
    pub kind: OutcomeKind,
    pub formatted_text: Option<String>,
}

impl ToolOutcome {
    fn from_kind(kind: OutcomeKind) -> Self {
        ToolOutcome {
            kind,
            formatted_text: None,
        }
    }

    fn from_errors(errs: ErrorList) -> Self {
        if errs.is_empty() {
            Self::from_kind(OutcomeKind::Clean)
        } else {
            Self::from_kind(OutcomeKind::Diagnostics(errs))
        }
    }

    fn failure(stderr: impl Into<String>) -> Self {
        Self::from_kind(OutcomeKind::ToolFailure {
            exit_code: None,
            stderr: stderr.into(),
        })
    }
}

pub fn run(
    inv: &ToolInvocation,
    progress_sink: &mut dyn FnMut(PassProgress),
    cancel: &CancelToken,
) -> ToolOutcome {
    match &inv.spec {
        CommandSpec::Builtin(cmd) => run_builtin(inv, *cmd, progress_sink, cancel),
        CommandSpec::External { program, args } => {
            run_external(inv, program, args, progress_sink, cancel)
        }
    }
}

fn run_builtin(
    inv: &ToolInvocation,
    cmd: Command,
    sink: &mut dyn FnMut(PassProgress),
    cancel: &CancelToken,
) -> ToolOutcome {
    let path = inv.article_abs();
    let bytes = match std::fs::read(&path) {
        Ok(b) => b,
        Err(e) => return ToolOutcome::failure(format!("cannot read {}: {e}", path.display())),
    };
    let Ok(source) = String::from_utf8(bytes) else {
        return ToolOutcome::failure(format!("{} is not valid UTF-8", inv.article_path.display()));
    };
    if cancel.is_canceled() {
        return ToolOutcome::from_kind(OutcomeKind::Canceled);
    }
    match cmd {
        Command::Verifier => {
            match Verifier::new()
                .line_delay(inv.version.line_delay)
                .run(&source, sink, cancel)
            {
                Ok(errs) => ToolOutcome::from_errors(errs),
                Err(_) => ToolOutcome::from_kind(OutcomeKind::Canceled),
            }
        }
        Command::Formatter => ToolOutcome {
            kind: OutcomeKind::Clean,
            formatted_text: Some(format(&source, &inv.options)),
        },
        Command::Linter => ToolOutcome::from_errors(lint(&source, &inv.options)),
    }
}

fn expand(arg: &str, inv: &ToolInvocation) -> String {
    let stem = inv
        .article_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let prelude = inv
        .version
        .prelude_dir
        .as_deref()
        .map(|p| p.display().to_string())
        .unwrap_or_default();
    arg.replace("{article}", &inv.article_path.display().to_string())
        .replace("{article_stem}", &stem)
        .replace("{working_dir}", &inv.working_dir.display().to_string())
        .replace("{prelude_dir}", &prelude)
}

fn kill_group(pgid: u32) {
    // SAFETY: plain syscall; ESRCH for an already-empty group is fine.
    unsafe {
        libc::kill(-(pgid as libc::pid_t), libc::SIGKILL);
    }
}

fn truncate_utf8(mut s: String, limit: usize) -> String {
    if s.len() > limit {
        let mut cut = limit;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
    }
    s
}

struct Supervised {
    child: Child,
    pgid: u32,
    stdout: Option<thread::JoinHandle<()>>,
    stderr: Option<thread::JoinHandle<String>>,
}

impl Supervised {
    /// Kills whatever is left of the process group and collects the readers.
    fn reap(&mut self) -> String {
        kill_group(self.pgid);
        let _ = self.child.wait();
        if let Some(h) = self.stdout.take() {
            let _ = h.join();
        }
        self.stderr
            .take()
            .and_then(|h| h.join().ok())
            .unwrap_or_default()
    }
}

impl Drop for Supervised {
    fn drop(&mut self) {
        if self.stdout.is_some() || self.stderr.is_some() {
            self.reap();
        }
    }
}

fn run_external(
    inv: &ToolInvocation,
    program: &Path,
    args: &[String],
    sink: &mut dyn FnMut(PassProgress),
    cancel: &CancelToken,
) -> ToolOutcome {
    let err_path = inv.err_path();
    if let Err(e) = std::fs::remove_file(&err_path) {
        if e.kind() != std::io::ErrorKind::NotFound {
            return ToolOutcome::failure(format!("cannot clear {}: {e}", err_path.display()));
        }
    }

    let mut process = Process::new(program);
    process
        .args(args.iter().map(|a| expand(a, inv)))
        .current_dir(&inv.working_dir)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    if let Some(prelude) = &inv.version.prelude_dir {
        process.env("MIZFILES", prelude);
    }
    let mut child = match process.spawn() {
        Ok(c) => c,
        Err(e) => {
            return ToolOutcome::failure(format!("failed to start {}: {e}", program.display()))
        }
    };
    let pgid = child.id();

    let (tx, rx) = mpsc::channel();
    let stdout = child.stdout.take().expect("stdout piped");
    let pattern = inv.version.progress_pattern.clone();
    let stdout_reader = thread::spawn(move || {
        let mut reader = BufReader::new(stdout);
        let mut buf = Vec::new();
        loop {
            buf.clear();
            match reader.read_until(b'\n', &mut buf) {
                Ok(0) | Err(_) => break,
                Ok(_) => {
                    let line = String::from_utf8_lossy(&buf);
                    if let Some(p) = parse_progress_line(&line, &pattern) {
                        if tx.send(p).is_err() {
                            break;
                        }
                    }
                }
            }
        }
    });
    let mut stderr = child.stderr.take().expect("stderr piped");
    let stderr_reader = thread::spawn(move || {
        let mut kept = Vec::new();
        let mut chunk = [0u8; 4096];
        loop {
            match stderr.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = STDERR_LIMIT.saturating_sub(kept.len());
                    kept.extend_from_slice(&chunk[..n.min(room)]);
                }
            }
        }
        truncate_utf8(String::from_utf8_lossy(&kept).into_owned(), STDERR_LIMIT)
    });

    let mut sup = Supervised {
        child,
        pgid,
        stdout: Some(stdout_reader),
        stderr: Some(stderr_reader),
    };

    let mut reader_done = false;
    let status: ExitStatus = loop {
        if reader_done {
            thread::sleep(POLL);
        } else {
            match rx.recv_timeout(POLL) {
                Ok(p) => sink(p),
                Err(mpsc::RecvTimeoutError::Timeout) => {}
                Err(mpsc::RecvTimeoutError::Disconnected) => reader_done = true,
            }
        }
        if cancel.is_canceled() {
            sup.reap();
            return ToolOutcome::from_kind(OutcomeKind::Canceled);
        }
        match sup.child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) => {}
            Err(e) => {
                sup.reap();
                return ToolOutcome::failure(format!("cannot wait for tool: {e}"));
            }
        }
    };
    let stderr_text = sup.reap();
    for p in rx.try_iter() {
        sink(p);
    }
    if cancel.is_canceled() {
        return ToolOutcome::from_kind(OutcomeKind::Canceled);
    }

    let errors = match std::fs::read(&err_path) {
        Ok(data) => match parse_err(&data) {
            Ok(errs) => Some(errs),
            Err(e) => {
                return ToolOutcome::from_kind(OutcomeKind::ToolFailure {
                    exit_code: status.code(),
                    stderr: format!("malformed {}: {e}", err_path.display()),
                })
            }
        },
        Err(_) => None,
    };
    match errors {
        Some(errs) if !errs.is_empty() => ToolOutcome::from_errors(errs),
        _ if status.success() => {
            let formatted_text = (inv.command == Command::Formatter.as_str())
                .then(|| std::fs::read(inv.article_abs()).ok())
                .flatten()
                .and_then(|b| String::from_utf8(b).ok());
            ToolOutcome {
                kind: OutcomeKind::Clean,
                formatted_text,
            }
        }
        _ => ToolOutcome::from_kind(OutcomeKind::ToolFailure {
            exit_code: status.code(),
            stderr: stderr_text,
        }),
    }
}
