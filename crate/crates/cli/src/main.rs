use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mizsrv_cli::{
    cmd_cancel, cmd_format, cmd_lint, cmd_status, cmd_verify, cmd_versions, ApiClient,
    ClientConfig, Exit, FormatMode, Term, VerifySource,
};
use mizsrv_core::FormatConfig;

/// Client for the remote Mizar verification server.
#[derive(Debug, Parser)]
#[command(name = "mizsrv", version)]
struct Cli {
    /// Client configuration file (default: ~/.config/mizsrv/client.toml).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Server base URL.
    #[arg(long, global = true)]
    url: Option<String>,
    /// Bearer token.
    #[arg(long, global = true)]
    token: Option<String>,
    /// Toolchain version to run.
    #[arg(long, global = true)]
    toolchain: Option<String>,
    #[arg(long, global = true)]
    poll_interval_ms: Option<u64>,
    #[arg(long, global = true)]
    timeout_s: Option<u64>,
    /// Suppress the progress bar.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Verify a local article, or one inside a repository archive.
    Verify {
        /// Local .miz file (inline submission).
        #[arg(required_unless_present = "repo", conflicts_with = "repo")]
        file: Option<PathBuf>,
        /// Archive URL template containing {ref}.
        #[arg(long, requires_all = ["git_ref", "path"])]
        repo: Option<String>,
        #[arg(long = "ref", id = "git_ref")]
        git_ref: Option<String>,
        /// Article path relative to the repository's text directory.
        #[arg(long)]
        path: Option<String>,
        /// Bearer token for the archive host.
        #[arg(long, env = "MIZSRV_REPO_TOKEN", hide_env_values = true)]
        repo_token: Option<String>,
    },
    /// Show a job's status.
    Status { job_id: String },
    /// Cancel a job.
    Cancel { job_id: String },
    /// List toolchain versions and their commands.
    Versions,
    /// Format an article (stdout by default).
    Format {
        file: PathBuf,
        /// Exit 1 if the file is not already formatted.
        #[arg(long, conflicts_with = "in_place")]
        check: bool,
        /// Rewrite the file.
        #[arg(long)]
        in_place: bool,
        #[command(flatten)]
        style: Style,
    },
    /// Lint an article.
    Lint {
        file: PathBuf,
        #[command(flatten)]
        style: Style,
    },
}

#[derive(Debug, Args)]
struct Style {
    #[arg(long)]
    indent_width: Option<u32>,
    #[arg(long)]
    max_line_length: Option<u32>,
}

impl Style {
    fn config(&self) -> FormatConfig {
        let d = FormatConfig::default();
        FormatConfig {
            indent_width: self.indent_width.unwrap_or(d.indent_width),
            max_line_length: self.max_line_length.unwrap_or(d.max_line_length),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr();
    let live = stderr.is_terminal();
    let mut term = Term {
        out: &mut stdout,
        err: &mut stderr,
        live,
        show_progress: !cli.quiet,
    };

    let cfg = ClientConfig::load(cli.config.as_deref(), |k| std::env::var(k).ok()).map(|mut c| {
        if let Some(u) = &cli.url {
            c.server_url = u.clone();
        }
        if let Some(t) = &cli.token {
            c.token = Some(t.clone());
        }
        if let Some(v) = &cli.toolchain {
            c.toolchain_version = v.clone();
        }
        if let Some(p) = cli.poll_interval_ms {
            c.poll_interval_ms = p;
        }
        if let Some(t) = cli.timeout_s {
            c.timeout_s = t;
        }
        c
    });
    let cfg = match cfg.and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("mizsrv: {e}");
            return ExitCode::from(Exit::Transport.code());
        }
    };
    let client = match ApiClient::new(&cfg) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("mizsrv: {e}");
            return ExitCode::from(Exit::Transport.code());
        }
    };

    let exit = match cli.cmd {
        Cmd::Verify {
            file,
            repo,
            git_ref,
            path,
            repo_token,
        } => {
            let source = match (file.as_deref(), repo) {
                (Some(f), _) => VerifySource::File(f),
                (None, Some(template)) => VerifySource::Repo {
                    template,
                    git_ref: git_ref.unwrap_or_default(),
                    path: path.unwrap_or_default(),
                    token: repo_token,
                },
                (None, None) => unreachable!("clap requires a file or --repo"),
            };
            cmd_verify(&client, &cfg, source, &mut term)
        }
        Cmd::Status { job_id } => cmd_status(&client, &job_id, &mut term),
        Cmd::Cancel { job_id } => cmd_cancel(&client, &job_id, &mut term),
        Cmd::Versions => cmd_versions(&client, &mut term),
        Cmd::Format {
            file,
            check,
            in_place,
            style,
        } => {
            let mode = if check {
                FormatMode::Check
            } else if in_place {
                FormatMode::InPlace
            } else {
                FormatMode::Print
            };
            cmd_format(&client, &file, mode, style.config(), &mut term)
        }
        Cmd::Lint { file, style } => cmd_lint(&client, &file, style.config(), &mut term),
    };
    ExitCode::from(exit.code())
}
