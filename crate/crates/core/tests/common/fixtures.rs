//! Loopback archive server, raw tarball builder and process probes.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

#[derive(Default)]
struct ServerState {
    routes: HashMap<String, Vec<u8>>,
    auth: Vec<Option<String>>,
    delay: Duration,
}

/// Serves `/archive/<ref>.tar.gz` from an in-memory map and counts requests.
pub struct ArchiveServer {
    base: String,
    hits: Arc<AtomicUsize>,
    state: Arc<Mutex<ServerState>>,
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
}

impl ArchiveServer {
    pub fn start() -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let base = format!("http://{}", server.server_addr().to_ip().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let state = Arc::new(Mutex::new(ServerState::default()));
        let handle = {
            let (server, hits, state) = (server.clone(), hits.clone(), state.clone());
            thread::spawn(move || {
                while let Ok(req) = server.recv() {
                    hits.fetch_add(1, Ordering::SeqCst);
                    let auth = req
                        .headers()
                        .iter()
                        .find(|h| h.field.equiv("Authorization"))
                        .map(|h| h.value.as_str().to_owned());
                    let (body, delay) = {
                        let mut st = state.lock().unwrap();
                        st.auth.push(auth);
                        (st.routes.get(req.url()).cloned(), st.delay)
                    };
                    let state_delay = delay;
                    thread::spawn(move || {
                        thread::sleep(state_delay);
                        let _ = match body {
                            Some(b) => req.respond(tiny_http::Response::from_data(b)),
                            None => req.respond(
                                tiny_http::Response::from_string("not found").with_status_code(404),
                            ),
                        };
                    });
                }
            })
        };
        ArchiveServer {
            base,
            hits,
            state,
            server,
            handle: Some(handle),
        }
    }

    pub fn template(&self) -> String {
        format!("{}/archive/{{ref}}.tar.gz", self.base)
    }

    pub fn put(&self, git_ref: &str, archive: Vec<u8>) {
        self.state
            .lock()
            .unwrap()
            .routes
            .insert(format!("/archive/{git_ref}.tar.gz"), archive);
    }

    pub fn set_delay(&self, d: Duration) {
        self.state.lock().unwrap().delay = d;
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn auth_headers(&self) -> Vec<Option<String>> {
        self.state.lock().unwrap().auth.clone()
    }
}

impl Drop for ArchiveServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[derive(Clone, Debug)]
pub enum Entry {
    File(String, Vec<u8>),
    Dir(String),
    Symlink(String, String),
    HardLink(String, String),
    Fifo(String),
    /// pax global header carrying a commit id, as forges emit it.
    Commit(String),
}

pub fn file(name: &str, body: &str) -> Entry {
    Entry::File(name.to_owned(), body.as_bytes().to_vec())
}

fn raw_header(name: &str, kind: tar::EntryType, size: u64, link: Option<&str>) -> tar::Header {
    let mut h = tar::Header::new_old();
    {
        let old = h.as_old_mut();
        assert!(name.len() < old.name.len(), "fixture names stay short");
        old.name[..name.len()].copy_from_slice(name.as_bytes());
        if let Some(l) = link {
            old.linkname[..l.len()].copy_from_slice(l.as_bytes());
        }
    }
    h.set_entry_type(kind);
    h.set_size(size);
    h.set_mode(0o644);
    h.set_mtime(0);
    h.set_cksum();
    h
}

fn pax_record(key: &str, value: &str) -> Vec<u8> {
    let body = format!(" {key}={value}\n");
    let mut len = body.len() + 1;
    while format!("{len}{body}").len() != len {
        len += 1;
    }
    format!("{len}{body}").into_bytes()
}

/// Builds a gzip tarball byte-for-byte from the given entries; names are
/// written verbatim so hostile paths survive.
pub fn tarball(entries: &[Entry]) -> Vec<u8> {
    let gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
    let mut b = tar::Builder::new(gz);
    for e in entries {
        match e {
            Entry::File(name, data) => {
                let h = raw_header(name, tar::EntryType::Regular, data.len() as u64, None);
                b.append(&h, &data[..]).unwrap();
            }
            Entry::Dir(name) => {
                let h = raw_header(name, tar::EntryType::Directory, 0, None);
                b.append(&h, &[][..]).unwrap();
            }
            Entry::Symlink(name, target) => {
                let h = raw_header(name, tar::EntryType::Symlink, 0, Some(target));
                b.append(&h, &[][..]).unwrap();
            }
            Entry::HardLink(name, target) => {
                let h = raw_header(name, tar::EntryType::Link, 0, Some(target));
                b.append(&h, &[][..]).unwrap();
            }
            Entry::Fifo(name) => {
                let h = raw_header(name, tar::EntryType::Fifo, 0, None);
                b.append(&h, &[][..]).unwrap();
            }
            Entry::Commit(id) => {
                let data = pax_record("comment", id);
                let h = raw_header(
                    "pax_global_header",
                    tar::EntryType::XGlobalHeader,
                    data.len() as u64,
                    None,
                );
                b.append(&h, &data[..]).unwrap();
            }
        }
    }
    let mut gz = b.into_inner().unwrap();
    gz.flush().unwrap();
    gz.finish().unwrap()
}

/// Every path under `dir`, symlinks not followed.
pub fn snapshot(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let Ok(rd) = std::fs::read_dir(&d) else {
            continue;
        };
        for e in rd.flatten() {
            let p = e.path();
            if e.file_type().is_ok_and(|t| t.is_dir()) {
                stack.push(p.clone());
            }
            out.push(p);
        }
    }
    out.sort();
    out
}

/// Live means present in /proc and not a zombie.
pub fn process_alive(pid: u32) -> bool {
    match std::fs::read_to_string(format!("/proc/{pid}/stat")) {
        Ok(stat) => {
            let state = stat
                .rsplit_once(')')
                .and_then(|(_, rest)| rest.split_whitespace().next())
                .unwrap_or("?");
            state != "Z" && state != "X"
        }
        Err(_) => false,
    }
}

/// Writes an executable-free shell script (run through /bin/sh).
pub fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, format!("#!/bin/sh\n{body}\n")).unwrap();
    p
}

/// Attack shapes against the extractor; `outside` is a directory next to
/// the workspace area that must stay untouched. `i` keeps names distinct.
fn attack(kind: usize, outside: &str, i: usize) -> (&'static str, Vec<Entry>) {
    let evil = format!("evil{i}");
    let t = "repo-x";
    let f = |n: &str| Entry::File(n.to_owned(), b"pwned".to_vec());
    let sl = |n: &str, to: &str| Entry::Symlink(n.to_owned(), to.to_owned());
    let hl = |n: &str, to: &str| Entry::HardLink(n.to_owned(), to.to_owned());
    match kind {
        0 => ("parent name", vec![f(&format!("../{evil}"))]),
        1 => ("parent inside top", vec![f(&format!("{t}/../../{evil}"))]),
        2 => ("deep parent", vec![f(&format!("{t}/text/../../../{evil}"))]),
        3 => ("absolute name", vec![f(&format!("{outside}/{evil}"))]),
        4 => ("dot parent", vec![f(&format!("./../{evil}"))]),
        5 => (
            "relative symlink then write through",
            vec![sl(&format!("{t}/link"), "../../.."), f(&format!("{t}/link/{evil}"))],
        ),
        6 => (
            "absolute symlink then write through",
            vec![sl(&format!("{t}/link"), outside), f(&format!("{t}/link/{evil}"))],
        ),
        7 => ("absolute hard link", vec![hl(&format!("{t}/h"), &format!("{outside}/victim"))]),
        8 => ("parent hard link", vec![hl(&format!("{t}/h"), "../victim")]),
        9 => (
            "escaping article symlink",
            vec![sl(&format!("{t}/text/a.miz"), "../../../victim")],
        ),
        10 => ("lexical escape symlink", vec![sl(&format!("{t}/l"), "sub/../../..")]),
        11 => (
            "symlink replaces file",
            vec![f(&format!("{t}/f")), sl(&format!("{t}/f"), "/etc/passwd")],
        ),
        12 => (
            "inner symlink then write through",
            vec![
                Entry::Dir(format!("{t}/text")),
                sl(&format!("{t}/d"), "text"),
                f(&format!("{t}/d/{evil}")),
            ],
        ),
        13 => ("fifo", vec![Entry::Fifo(format!("{t}/pipe"))]),
        14 => (
            "second top-level directory",
            vec![f(&format!("{t}/a")), f(&format!("other/{evil}"))],
        ),
        15 => ("dotted parent inside top", vec![f(&format!("{t}/./../../{evil}"))]),
        16 => ("symlink to top parent", vec![sl(&format!("{t}/up"), "..")]),
        17 => (
            "hard link through symlink",
            vec![sl(&format!("{t}/l"), outside), hl(&format!("{t}/h"), &format!("{t}/l/victim"))],
        ),
        18 => ("absolute directory", vec![Entry::Dir(format!("{outside}/d{i}/"))]),
        _ => (
            "symlink to symlink outward",
            vec![sl(&format!("{t}/a"), "b"), sl(&format!("{t}/b"), "../../..")],
        ),
    }
}

pub const ATTACK_KINDS: usize = 20;

/// `n` hostile archives cycling through every attack shape, each preceded by
/// a varying number of harmless entries.
pub fn hostile_archives(outside: &Path, n: usize) -> Vec<(String, Vec<u8>)> {
    let outside = outside.display().to_string();
    (0..n)
        .map(|i| {
            let kind = i % ATTACK_KINDS;
            let (label, attack_entries) = attack(kind, &outside, i);
            let mut entries = vec![Entry::Dir("repo-x/".into())];
            for k in 0..(i / ATTACK_KINDS) {
                entries.push(file(&format!("repo-x/text/ok{k}.miz"), "environ\nbegin\n"));
            }
            entries.extend(attack_entries);
            (format!("{i:03} {label}"), tarball(&entries))
        })
        .collect()
}
