//! Local-versus-remote latency harness.
//!
//! The local arm runs the paced built-in verifier in process. The remote
//! arm submits the same article to a loopback server whose built-in
//! toolchain uses the same pacing, then polls until the job is terminal.
//! Both arms spend the same simulated verification time, so the difference
//! is protocol, polling and (in repo-archive mode) download cost.

use std::fmt::Write as _;
use std::io::Write as _;
use std::str::FromStr;
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use mizsrv_cli::{ApiClient, ClientConfig, ClientError};
use mizsrv_core::{
    CancelToken, Command, FormatConfig, JobRequest, JobSource, RepoRef, ToolRegistry,
    ToolchainVersion, Verifier, BUILTIN_VERSION,
};
use mizsrv_server::{spawn_server, BackgroundServer, Server, ServerConfig, ServerError};
use thiserror::Error;

const TOKEN: &str = "latency-harness";
const ARTICLE_PATH: &str = "bench.miz";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("server: {0}")]
    Server(#[from] ServerError),
    #[error("client: {0}")]
    Client(#[from] ClientError),
    #[error("job {id} ended as {state}")]
    Job { id: String, state: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("nothing to report")]
    EmptyReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceMode {
    Inline,
    RepoArchive,
}

impl SourceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceMode::Inline => "inline",
            SourceMode::RepoArchive => "repo-archive",
        }
    }
}

impl FromStr for SourceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "inline" => Ok(SourceMode::Inline),
            "repo-archive" => Ok(SourceMode::RepoArchive),
            _ => Err(format!("unknown source mode {s:?} (inline | repo-archive)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub article_lines: u32,
    pub simulated_verify: Duration,
    pub poll_interval_ms: u64,
    pub source_mode: SourceMode,
    pub repetitions: usize,
}

impl Scenario {
    /// The desk-scale counterpart of the published measurement.
    pub fn reference() -> Self {
        Scenario {
            article_lines: 3657,
            simulated_verify: Duration::from_secs(10),
            poll_interval_ms: 500,
            source_mode: SourceMode::Inline,
            repetitions: 5,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Scenario(m.to_owned()));
        if self.repetitions < 3 {
            return bad("repetitions must be at least 3");
        }
        if self.article_lines < 3 {
            return bad("article_lines must be at least 3");
        }
        if self.poll_interval_ms == 0 {
            return bad("poll_interval_ms must be positive");
        }
        Ok(())
    }

    /// Per-line, per-pass delay giving `simulated_verify` over the article.
    pub fn line_delay(&self) -> Duration {
        self.simulated_verify / (3 * self.article_lines)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stats {
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(samples: &[f64]) -> Stats {
        assert!(!samples.is_empty());
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        };
        Stats {
            median,
            min: s[0],
            max: s[n - 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub scenario: Scenario,
    pub local: Stats,
    pub remote: Stats,
    /// Paired per-repetition wall times in seconds.
    pub local_samples: Vec<f64>,
    pub remote_samples: Vec<f64>,
}

impl Measurement {
    pub fn overhead_seconds(&self) -> f64 {
        self.remote.median - self.local.median
    }

    /// Remote slower than local in every repetition.
    pub fn ordered(&self) -> bool {
        self.local_samples
            .iter()
            .zip(&self.remote_samples)
            .all(|(l, r)| r > l)
    }
}

/// Well-formed article of exactly `lines` lines that verifies without
/// diagnostics.
pub fn synthetic_article(lines: u32) -> String {
    let lines = lines.max(2) as usize;
    let mut out = String::from("environ\nbegin\n");
    let mut n = 2;
    let mut k = 0;
    while n + 9 <= lines {
        k += 1;
        let _ = write!(
            out,
            "theorem Th{k}:\n  x{k} = x{k}\nproof\n  now\n    A{k}: x{k} = x{k};\n    thus thesis by A{k};\n  end;\n  hence thesis;\nend;\n"
        );
        n += 9;
    }
    while n < lines {
        out.push_str(":: padding\n");
        n += 1;
    }
    out
}

/// Gzip tarball with `<top>/text/<name>` as its only article.
pub fn article_tarball(top: &str, name: &str, text: &str) -> Vec<u8> {
    let gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
    let mut b = tar::Builder::new(gz);
    let mut h = tar::Header::new_gnu();
    h.set_size(text.len() as u64);
    h.set_mode(0o644);
    h.set_cksum();
    b.append_data(&mut h, format!("{top}/text/{name}"), text.as_bytes())
        .expect("in-memory tar");
    let mut gz = b.into_inner().expect("in-memory tar");
    let _ = gz.flush();
    gz.finish().expect("in-memory gzip")
}

/// Loopback archive host answering every `/archive/<ref>.tar.gz` with the
/// same tarball.
pub struct ArchiveHost {
    server: Arc<tiny_http::Server>,
    base: String,
    handle: Option<JoinHandle<()>>,
}

impl ArchiveHost {
    pub fn start(archive: Vec<u8>) -> Result<Self, HarnessError> {
        let server = Arc::new(
            tiny_http::Server::http("127.0.0.1:0")
                .map_err(|e| std::io::Error::other(e.to_string()))?,
        );
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("archive host has no IP address"))?;
        let body = Arc::new(archive);
        let s = Arc::clone(&server);
        let handle = thread::spawn(move || {
            while let Ok(req) = s.recv() {
                let body = Arc::clone(&body);
                thread::spawn(move || {
                    let ok = req.url().starts_with("/archive/") && req.url().ends_with(".tar.gz");
                    let _ = if ok {
                        req.respond(tiny_http::Response::from_data(body.as_slice()))
                    } else {
                        req.respond(tiny_http::Response::empty(404))
                    };
                });
            }
        });
        Ok(ArchiveHost {
            server,
            base: format!("http://{addr}"),
            handle: Some(handle),
        })
    }

    pub fn template(&self) -> String {
        format!("{}/archive/{{ref}}.tar.gz", self.base)
    }
}

impl Drop for ArchiveHost {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Loopback server plus client configured for one scenario.
pub struct Harness {
    scenario: Scenario,
    article: String,
    server: BackgroundServer,
    client: ApiClient,
    client_cfg: ClientConfig,
    archive: Option<ArchiveHost>,
    _area: tempfile::TempDir,
}

impl Harness {
    pub fn start(scenario: Scenario) -> Result<Self, HarnessError> {
        scenario.validate()?;
        let article = synthetic_article(scenario.article_lines);
        let area = tempfile::tempdir()?;
        let mut cfg = ServerConfig::for_tests(TOKEN, area.path().join("area"));
        cfg.workspace.allow_insecure_http = true;
        let mut reg = ToolRegistry::new();
        reg.insert(ToolchainVersion::builtin(BUILTIN_VERSION).with_line_delay(scenario.line_delay()));
        let server = spawn_server(Server::with_registry(cfg, Arc::new(reg))?)?;
        let client_cfg = ClientConfig {
            server_url: server.base_url(),
            token: Some(TOKEN.to_owned()),
            poll_interval_ms: scenario.poll_interval_ms,
            ..ClientConfig::default()
        };
        let client = ApiClient::new(&client_cfg)?;
        let archive = match scenario.source_mode {
            SourceMode::Inline => None,
            SourceMode::RepoArchive => Some(ArchiveHost::start(article_tarball(
                "bench-repo",
                ARTICLE_PATH,
                &article,
            ))?),
        };
        Ok(Harness {
            scenario,
            article,
            server,
            client,
            client_cfg,
            archive,
            _area: area,
        })
    }

    pub fn server(&self) -> &BackgroundServer {
        &self.server
    }

    pub fn local_once(&self) -> f64 {
        let verifier = Verifier::paced_for(self.scenario.article_lines, self.scenario.simulated_verify);
        let t = Instant::now();
        let errs = verifier
            .run(&self.article, &mut |_| {}, &CancelToken::new())
            .expect("never canceled");
        let elapsed = t.elapsed().as_secs_f64();
        debug_assert!(errs.is_empty());
        elapsed
    }

    /// Submit, then sleep-and-poll until terminal. `rep` makes repo refs
    /// unique so every repetition downloads the archive.
    pub fn remote_once(&self, rep: usize) -> Result<f64, HarnessError> {
        let source = match &self.archive {
            None => JobSource::Inline {
                filename: ARTICLE_PATH.to_owned(),
                text: self.article.clone(),
            },
            Some(host) => JobSource::Repo {
                repo: RepoRef::new(host.template(), format!("rep-{rep}-{}", std::process::id())),
                path: ARTICLE_PATH.to_owned(),
            },
        };
        let req = JobRequest {
            command: Command::Verifier,
            toolchain_version: BUILTIN_VERSION.to_owned(),
            source,
            options: FormatConfig::default(),
        };
        let t = Instant::now();
        let id = self.client.submit(&req)?.to_string();
        loop {
            thread::sleep(self.client_cfg.poll_interval());
            let st = self.client.status(&id)?;
            if st.state.is_terminal() {
                let elapsed = t.elapsed().as_secs_f64();
                if st.state != mizsrv_core::JobState::Succeeded {
                    return Err(HarnessError::Job {
                        id,
                        state: st.state.as_str().to_owned(),
                    });
                }
                return Ok(elapsed);
            }
        }
    }
}

/// Runs the repetitions sequentially, alternating arms.
pub fn run_scenario(s: &Scenario) -> Result<Measurement, HarnessError> {
    let h = Harness::start(s.clone())?;
    let mut local = Vec::with_capacity(s.repetitions);
    let mut remote = Vec::with_capacity(s.repetitions);
    for rep in 0..s.repetitions {
        local.push(h.local_once());
        remote.push(h.remote_once(rep)?);
    }
    Ok(Measurement {
        scenario: s.clone(),
        local: Stats::of(&local),
        remote: Stats::of(&remote),
        local_samples: local,
        remote_samples: remote,
    })
}

pub const CSV_HEADER: &str = "article_lines,simulated_verify_s,poll_interval_ms,source_mode,repetitions,local_median_s,local_min_s,local_max_s,remote_median_s,remote_min_s,remote_max_s,overhead_s";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub text: String,
    pub csv: String,
}

/// Rows follow input order; CSV columns are [`CSV_HEADER`].
pub fn emit_report(ms: &[Measurement]) -> Result<Report, HarnessError> {
    if ms.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let mut csv = format!("{CSV_HEADER}\n");
    let mut text = format!(
        "{:>6} {:>7} {:>6} {:<12} {:>4} {:>22} {:>22} {:>9}\n",
        "lines", "sim_s", "poll", "mode", "reps", "local med [min,max]", "remote med [min,max]", "overhead"
    );
    for m in ms {
        let s = &m.scenario;
        let _ = writeln!(
            csv,
            "{},{:.3},{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
            s.article_lines,
            s.simulated_verify.as_secs_f64(),
            s.poll_interval_ms,
            s.source_mode.as_str(),
            s.repetitions,
            m.local.median,
            m.local.min,
            m.local.max,
            m.remote.median,
            m.remote.min,
            m.remote.max,
            m.overhead_seconds()
        );
        let _ = writeln!(
            text,
            "{:>6} {:>7.2} {:>6} {:<12} {:>4} {:>22} {:>22} {:>9.3}",
            s.article_lines,
            s.simulated_verify.as_secs_f64(),
            s.poll_interval_ms,
            s.source_mode.as_str(),
            s.repetitions,
            format!("{:.3} [{:.3},{:.3}]", m.local.median, m.local.min, m.local.max),
            format!("{:.3} [{:.3},{:.3}]", m.remote.median, m.remote.min, m.remote.max),
            m.overhead_seconds()
        );
    }
    Ok(Report { text, csv })
}

/// Serializes timing runs inside one process.
pub fn timing_lock() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}
