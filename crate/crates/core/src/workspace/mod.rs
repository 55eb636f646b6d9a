//! Server-side workspaces materialised from repository archives.
//!
//! A [`RepoRef`] names an archive endpoint (`{ref}` is substituted into the
//! URL template). Downloads are cached under `<area>/cache/<key>/` keyed by
//! the (url template, ref) pair; refs that look like commit or content hashes
//! are treated as immutable and never refetched. Jobs take an exclusive
//! [`Lease`] on a workspace before running tools in it.

mod unpack;

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use unpack::{unpack_tar_gz, UnpackReport};

pub const TEXT_DIR: &str = "text";

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("archive URL must use https: {0}")]
    InsecureUrl(String),
    #[error("archive URL template must contain {{ref}}: {0}")]
    MissingPlaceholder(String),
    #[error("invalid ref {0:?}")]
    InvalidRef(String),
    #[error("archive download failed with HTTP status {status}")]
    Http { status: u16 },
    #[error("archive download failed: {0}")]
    Transport(String),
    #[error("archive exceeds the {limit}-byte limit")]
    TooLarge { limit: u64 },
    #[error("unsafe archive entry {path:?}: {reason}")]
    UnsafeEntry { path: String, reason: String },
    #[error("corrupt archive: {0}")]
    Corrupt(String),
    #[error("path {0:?} escapes the workspace text directory")]
    PathViolation(String),
    #[error("article {0:?} not found")]
    NotFound(String),
    #[error("workspace is leased by another job")]
    Busy,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoRef {
    pub archive_url_template: String,
    #[serde(rename = "ref")]
    pub git_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token: Option<String>,
}

impl std::fmt::Debug for RepoRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RepoRef")
            .field("archive_url_template", &self.archive_url_template)
            .field("ref", &self.git_ref)
            .field("auth_token", &self.auth_token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl RepoRef {
    pub fn new(template: impl Into<String>, git_ref: impl Into<String>) -> Self {
        RepoRef {
            archive_url_template: template.into(),
            git_ref: git_ref.into(),
            auth_token: None,
        }
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.auth_token = Some(token.into());
        self
    }

    /// Checks scheme and ref; `allow_http` is for loopback fixtures only.
    pub fn validate(&self, allow_http: bool) -> Result<(), WorkspaceError> {
        let url = &self.archive_url_template;
        let https = url.starts_with("https://");
        let http = allow_http && url.starts_with("http://");
        if !https && !http {
            return Err(WorkspaceError::InsecureUrl(url.clone()));
        }
        if !url.contains("{ref}") {
            return Err(WorkspaceError::MissingPlaceholder(url.clone()));
        }
        let r = self.git_ref.trim();
        if r.is_empty() || r.chars().any(|c| c.is_control()) {
            return Err(WorkspaceError::InvalidRef(self.git_ref.clone()));
        }
        Ok(())
    }

    /// Ref percent-encoded so it cannot introduce path separators.
    pub fn sanitized_ref(&self) -> String {
        let mut out = String::new();
        for b in self.git_ref.trim().bytes() {
            if b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-') {
                out.push(b as char);
            } else {
                out.push_str(&format!("%{b:02X}"));
            }
        }
        out
    }

    pub fn archive_url(&self) -> String {
        self.archive_url_template
            .replace("{ref}", &self.sanitized_ref())
    }

    /// Full commit ids and sha256 digests never move.
    pub fn is_immutable(&self) -> bool {
        let r = self.git_ref.trim();
        (r.len() == 40 || r.len() == 64) && r.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
    }

    pub fn cache_key(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.archive_url_template.as_bytes());
        h.update([0u8]);
        h.update(self.git_ref.trim().as_bytes());
        hex::encode(&h.finalize()[..16])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Workspace {
    pub root: PathBuf,
    pub origin: Option<RepoRef>,
    pub resolved_commit: Option<String>,
}

impl Workspace {
    pub fn text_dir(&self) -> PathBuf {
        self.root.join(TEXT_DIR)
    }
}

#[derive(Clone, Debug)]
pub struct WorkspaceConfig {
    pub area: PathBuf,
    pub max_archive_bytes: u64,
    pub max_unpacked_bytes: u64,
    /// How long a mutable ref (branch, tag) may be served from cache.
    pub mutable_ref_max_age: Duration,
    pub allow_insecure_http: bool,
    pub http_timeout: Duration,
}

impl WorkspaceConfig {
    pub fn new(area: impl Into<PathBuf>) -> Self {
        WorkspaceConfig {
            area: area.into(),
            max_archive_bytes: 200 * 1024 * 1024,
            max_unpacked_bytes: 2 * 1024 * 1024 * 1024,
            mutable_ref_max_age: Duration::ZERO,
            allow_insecure_http: false,
            http_timeout: Duration::from_secs(300),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheMeta {
    archive_url: String,
    git_ref: String,
    resolved_commit: Option<String>,
    fetched_at_ms: u64,
}

#[derive(Default)]
struct KeyState {
    last_fetch_done: Option<Instant>,
}

#[derive(Default)]
struct LeaseTable {
    held: Mutex<HashMap<PathBuf, ()>>,
    freed: Condvar,
}

impl LeaseTable {
    fn try_take(&self, root: &Path) -> bool {
        let mut held = self.held.lock().unwrap();
        if held.contains_key(root) {
            return false;
        }
        held.insert(root.to_path_buf(), ());
        true
    }

    fn take_blocking(&self, root: &Path) {
        let mut held = self.held.lock().unwrap();
        while held.contains_key(root) {
            held = self.freed.wait(held).unwrap();
        }
        held.insert(root.to_path_buf(), ());
    }

    fn release(&self, root: &Path) {
        self.held.lock().unwrap().remove(root);
        self.freed.notify_all();
    }
}

/// Exclusive right to run tools in a workspace; released on drop.
pub struct Lease {
    table: Arc<LeaseTable>,
    workspace: Workspace,
}

impl std::fmt::Debug for Lease {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Lease").field("root", &self.workspace.root).finish()
    }
}

impl Lease {
    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    pub fn locate_article(&self, rel: &str) -> Result<PathBuf, WorkspaceError> {
        locate_article(&self.workspace, rel)
    }
}

impl Drop for Lease {
    fn drop(&mut self) {
        self.table.release(&self.workspace.root);
    }
}

/// Throwaway workspace for an inline source; deleted on drop.
#[derive(Debug)]
pub struct InlineWorkspace {
    workspace: Workspace,
    article: PathBuf,
}

impl InlineWorkspace {
    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    /// Article path relative to the workspace root.
    pub fn article(&self) -> &Path {
        &self.article
    }
}

impl Drop for InlineWorkspace {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.workspace.root);
    }
}

/// Lexical check that `rel` is a non-empty relative path of normal components.
pub fn validate_relative_path(rel: &str) -> Result<(), WorkspaceError> {
    let path = Path::new(rel);
    if rel.is_empty() || rel.contains('\0') {
        return Err(WorkspaceError::PathViolation(rel.to_owned()));
    }
    if path
        .components()
        .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir))
        || path.components().all(|c| c == Component::CurDir)
    {
        return Err(WorkspaceError::PathViolation(rel.to_owned()));
    }
    Ok(())
}

/// Resolves `rel` under `<root>/text`, refusing anything that ends up outside it.
pub fn locate_article(ws: &Workspace, rel: &str) -> Result<PathBuf, WorkspaceError> {
    validate_relative_path(rel)?;
    let text = ws.text_dir();
    let candidate = text.join(rel);
    if fs::symlink_metadata(&candidate).is_err() {
        return Err(WorkspaceError::NotFound(rel.to_owned()));
    }
    let text_canon = fs::canonicalize(&text)?;
    let resolved =
        fs::canonicalize(&candidate).map_err(|_| WorkspaceError::NotFound(rel.to_owned()))?;
    if !resolved.starts_with(&text_canon) {
        return Err(WorkspaceError::PathViolation(rel.to_owned()));
    }
    if !resolved.is_file() {
        return Err(WorkspaceError::NotFound(rel.to_owned()));
    }
    Ok(resolved)
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn random_name(prefix: &str) -> String {
    let mut bytes = [0u8; 8];
    rand::rng().fill_bytes(&mut bytes);
    format!("{prefix}{}", hex::encode(bytes))
}

pub struct WorkspaceManager {
    cfg: WorkspaceConfig,
    keys: Mutex<HashMap<String, Arc<Mutex<KeyState>>>>,
    leases: Arc<LeaseTable>,
}

impl std::fmt::Debug for WorkspaceManager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkspaceManager")
            .field("area", &self.cfg.area)
            .finish()
    }
}

impl WorkspaceManager {
    pub fn new(mut cfg: WorkspaceConfig) -> Result<Self, WorkspaceError> {
        for sub in ["cache", "inline", "tmp"] {
            fs::create_dir_all(cfg.area.join(sub))?;
        }
        cfg.area = fs::canonicalize(&cfg.area)?;
        Ok(WorkspaceManager {
            cfg,
            keys: Mutex::new(HashMap::new()),
            leases: Arc::new(LeaseTable::default()),
        })
    }

    pub fn config(&self) -> &WorkspaceConfig {
        &self.cfg
    }

    pub fn area(&self) -> &Path {
        &self.cfg.area
    }

    pub fn cache_dir(&self, repo: &RepoRef) -> PathBuf {
        self.cfg.area.join("cache").join(repo.cache_key())
    }

    fn meta_path(&self, repo: &RepoRef) -> PathBuf {
        self.cfg
            .area
            .join("cache")
            .join(format!("{}.json", repo.cache_key()))
    }

    fn read_meta(&self, repo: &RepoRef) -> Option<CacheMeta> {
        let data = fs::read(self.meta_path(repo)).ok()?;
        serde_json::from_slice(&data).ok()
    }

    pub fn materialize(&self, repo: &RepoRef) -> Result<Workspace, WorkspaceError> {
        repo.validate(self.cfg.allow_insecure_http)?;
        let called = Instant::now();
        let key_state = {
            let mut keys = self.keys.lock().unwrap();
            Arc::clone(keys.entry(repo.cache_key()).or_default())
        };
        // same-key callers queue here and reuse a fetch that finished after they arrived
        let mut state = key_state.lock().unwrap();

        let root = self.cache_dir(repo);
        if let (Some(meta), true) = (self.read_meta(repo), root.is_dir()) {
            let fresh = repo.is_immutable()
                || state.last_fetch_done.is_some_and(|t| t >= called)
                || (!self.cfg.mutable_ref_max_age.is_zero()
                    && now_ms().saturating_sub(meta.fetched_at_ms)
                        <= self.cfg.mutable_ref_max_age.as_millis() as u64);
            if fresh {
                return Ok(Workspace {
                    root,
                    origin: Some(repo.clone()),
                    resolved_commit: meta.resolved_commit,
                });
            }
        }

        let ws = self.fetch(repo, &root)?;
        state.last_fetch_done = Some(Instant::now());
        Ok(ws)
    }

    fn fetch(&self, repo: &RepoRef, root: &Path) -> Result<Workspace, WorkspaceError> {
        let tmp = self.cfg.area.join("tmp");
        let archive_path = tmp.join(random_name("dl-"));
        let staging = tmp.join(random_name("unpack-"));
        let result = self.fetch_into(repo, &archive_path, &staging);
        let _ = fs::remove_file(&archive_path);
        let (report, digest) = match result {
            Ok(r) => r,
            Err(e) => {
                let _ = fs::remove_dir_all(&staging);
                return Err(e);
            }
        };

        let resolved_commit = report.commit.or(Some(format!("sha256:{digest}")));
        // swap under an exclusive hold so no running job sees a half-replaced tree
        self.leases.take_blocking(root);
        let swapped = (|| -> Result<(), WorkspaceError> {
            if root.exists() {
                fs::remove_dir_all(root)?;
            }
            fs::rename(&staging, root)?;
            let meta = CacheMeta {
                archive_url: repo.archive_url(),
                git_ref: repo.git_ref.clone(),
                resolved_commit: resolved_commit.clone(),
                fetched_at_ms: now_ms(),
            };
            fs::write(self.meta_path(repo), serde_json::to_vec(&meta).expect("meta serializes"))?;
            Ok(())
        })();
        self.leases.release(root);
        if let Err(e) = swapped {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
        Ok(Workspace {
            root: root.to_path_buf(),
            origin: Some(repo.clone()),
            resolved_commit,
        })
    }

    fn fetch_into(
        &self,
        repo: &RepoRef,
        archive_path: &Path,
        staging: &Path,
    ) -> Result<(UnpackReport, String), WorkspaceError> {
        let digest = self.download(repo, archive_path)?;
        let file = fs::File::open(archive_path)?;
        let report = unpack_tar_gz(io::BufReader::new(file), staging, self.cfg.max_unpacked_bytes)?;
        fs::create_dir_all(staging.join(TEXT_DIR))?;
        Ok((report, digest))
    }

    /// Streams the archive to `dest` and returns its sha256.
    fn download(&self, repo: &RepoRef, dest: &Path) -> Result<String, WorkspaceError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(self.cfg.http_timeout)
            .build()
            .map_err(|e| WorkspaceError::Transport(e.to_string()))?;
        let mut req = client.get(repo.archive_url());
        if let Some(token) = &repo.auth_token {
            req = req.bearer_auth(token);
        }
        let mut resp = req
            .send()
            .map_err(|e| WorkspaceError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(WorkspaceError::Http {
                status: resp.status().as_u16(),
            });
        }
        let limit = self.cfg.max_archive_bytes;
        if resp.content_length().is_some_and(|n| n > limit) {
            return Err(WorkspaceError::TooLarge { limit });
        }
        let mut out = fs::File::create(dest)?;
        let mut hasher = Sha256::new();
        let mut total: u64 = 0;
        let mut buf = vec![0u8; 64 * 1024];
        loop {
            let n = resp
                .read(&mut buf)
                .map_err(|e| WorkspaceError::Transport(e.to_string()))?;
            if n == 0 {
                break;
            }
            total += n as u64;
            if total > limit {
                return Err(WorkspaceError::TooLarge { limit });
            }
            hasher.update(&buf[..n]);
            out.write_all(&buf[..n])?;
        }
        out.flush()?;
        Ok(hex::encode(hasher.finalize()))
    }

    /// Non-blocking exclusive lease; `Busy` if another job holds it.
    pub fn lease(&self, ws: &Workspace) -> Result<Lease, WorkspaceError> {
        if !self.leases.try_take(&ws.root) {
            return Err(WorkspaceError::Busy);
        }
        Ok(Lease {
            table: Arc::clone(&self.leases),
            workspace: ws.clone(),
        })
    }

    /// Fresh private workspace holding one article under `text/`.
    pub fn inline(&self, filename: &str, text: &str) -> Result<InlineWorkspace, WorkspaceError> {
        validate_inline_filename(filename)?;
        let root = self.cfg.area.join("inline").join(random_name("ws-"));
        let text_dir = root.join(TEXT_DIR);
        fs::create_dir_all(&text_dir)?;
        let ws = InlineWorkspace {
            workspace: Workspace {
                root,
                origin: None,
                resolved_commit: None,
            },
            article: Path::new(TEXT_DIR).join(filename),
        };
        fs::write(text_dir.join(filename), text)?;
        Ok(ws)
    }
}

/// Inline article names are a single path component.
pub fn validate_inline_filename(name: &str) -> Result<(), WorkspaceError> {
    let mut comps = Path::new(name).components();
    match (comps.next(), comps.next()) {
        (Some(Component::Normal(_)), None) if !name.contains(['/', '\\', '\0']) => Ok(()),
        _ => Err(WorkspaceError::PathViolation(name.to_owned())),
    }
}
