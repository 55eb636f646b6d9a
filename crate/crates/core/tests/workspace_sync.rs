mod common;

use std::fs;
use std::path::Path;
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::Duration;

use common::fixtures::{file, hostile_archives, snapshot, tarball, ArchiveServer, Entry};
use mizsrv_core::workspace::{locate_article, WorkspaceError};
use mizsrv_core::{RepoRef, WorkspaceConfig, WorkspaceManager};

const COMMIT: &str = "3f786850e387550fdab836ed7e6dc881de23001b";

struct Env {
    _dir: tempfile::TempDir,
    outside: std::path::PathBuf,
    mgr: WorkspaceManager,
    server: ArchiveServer,
}

fn env_with(tweak: impl FnOnce(&mut WorkspaceConfig)) -> Env {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().canonicalize().unwrap();
    let outside = base.join("outside");
    fs::create_dir_all(&outside).unwrap();
    fs::write(outside.join("victim"), "original").unwrap();
    let mut cfg = WorkspaceConfig::new(base.join("area"));
    cfg.allow_insecure_http = true;
    tweak(&mut cfg);
    Env {
        _dir: dir,
        outside,
        mgr: WorkspaceManager::new(cfg).unwrap(),
        server: ArchiveServer::start(),
    }
}

fn env() -> Env {
    env_with(|_| {})
}

fn three_files() -> Vec<u8> {
    tarball(&[
        Entry::Commit(COMMIT.into()),
        Entry::Dir("mml-3f78685/".into()),
        file("mml-3f78685/README.md", "readme"),
        file("mml-3f78685/text/a.miz", "environ\nbegin\n"),
        file("mml-3f78685/text/nested/b.miz", "environ\nbegin\nproof\nend;\n"),
    ])
}

#[test]
fn three_file_tarball_with_top_directory_stripped() {
    let e = env();
    e.server.put(COMMIT, three_files());
    let repo = RepoRef::new(e.server.template(), COMMIT);
    let ws = e.mgr.materialize(&repo).unwrap();
    assert!(ws.root.starts_with(e.mgr.area().join("cache")));
    let files: Vec<String> = snapshot(&ws.root)
        .into_iter()
        .filter(|p| p.is_file())
        .map(|p| p.strip_prefix(&ws.root).unwrap().display().to_string())
        .collect();
    assert_eq!(files, vec!["README.md", "text/a.miz", "text/nested/b.miz"]);
    assert_eq!(fs::read_to_string(ws.root.join("text/a.miz")).unwrap(), "environ\nbegin\n");
    assert_eq!(ws.resolved_commit.as_deref(), Some(COMMIT));
}

#[test]
fn immutable_ref_is_served_from_cache_without_network() {
    let e = env();
    e.server.put(COMMIT, three_files());
    let repo = RepoRef::new(e.server.template(), COMMIT);
    let first = e.mgr.materialize(&repo).unwrap();
    assert_eq!(e.server.hits(), 1);
    let before = fs::read(first.root.join("text/a.miz")).unwrap();
    let second = e.mgr.materialize(&repo).unwrap();
    assert_eq!(e.server.hits(), 1);
    assert_eq!(second.root, first.root);
    assert_eq!(fs::read(second.root.join("text/a.miz")).unwrap(), before);
}

#[test]
fn mutable_refs_refetch_unless_max_age_allows() {
    let e = env();
    e.server.put("main", three_files());
    let repo = RepoRef::new(e.server.template(), "main");
    e.mgr.materialize(&repo).unwrap();
    e.mgr.materialize(&repo).unwrap();
    assert_eq!(e.server.hits(), 2);

    let e = env_with(|c| c.mutable_ref_max_age = Duration::from_secs(600));
    e.server.put("main", three_files());
    let repo = RepoRef::new(e.server.template(), "main");
    e.mgr.materialize(&repo).unwrap();
    e.mgr.materialize(&repo).unwrap();
    assert_eq!(e.server.hits(), 1);
}

#[test]
fn concurrent_same_key_calls_coalesce() {
    let e = Arc::new(env());
    e.server.set_delay(Duration::from_millis(300));
    e.server.put("main", three_files());
    let barrier = Arc::new(Barrier::new(8));
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let (e, b) = (Arc::clone(&e), Arc::clone(&barrier));
            thread::spawn(move || {
                b.wait();
                e.mgr
                    .materialize(&RepoRef::new(e.server.template(), "main"))
                    .unwrap()
                    .root
            })
        })
        .collect();
    let roots: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert!(roots.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(e.server.hits(), 1);
}

#[test]
fn bearer_token_is_sent_only_when_configured() {
    let e = env();
    e.server.put("main", three_files());
    e.mgr
        .materialize(&RepoRef::new(e.server.template(), "main").with_token("tok-123"))
        .unwrap();
    e.mgr.materialize(&RepoRef::new(e.server.template(), "main")).unwrap();
    assert_eq!(
        e.server.auth_headers(),
        vec![Some("Bearer tok-123".to_owned()), None]
    );
}

#[test]
fn http_errors_size_cap_and_corrupt_archives() {
    let e = env_with(|c| c.max_archive_bytes = 64);
    let missing = RepoRef::new(e.server.template(), "nope");
    assert!(matches!(e.mgr.materialize(&missing), Err(WorkspaceError::Http { status: 404 })));

    e.server.put("big", three_files());
    let big = RepoRef::new(e.server.template(), "big");
    assert!(matches!(e.mgr.materialize(&big), Err(WorkspaceError::TooLarge { limit: 64 })));

    e.server.put("junk", b"not a tarball".to_vec());
    let junk = RepoRef::new(e.server.template(), "junk");
    assert!(matches!(e.mgr.materialize(&junk), Err(WorkspaceError::Corrupt(_))));
    assert_eq!(fs::read_dir(e.mgr.area().join("tmp")).unwrap().count(), 0);
}

#[test]
fn plain_http_is_refused_by_default() {
    let e = env_with(|c| c.allow_insecure_http = false);
    e.server.put("main", three_files());
    let r = e.mgr.materialize(&RepoRef::new(e.server.template(), "main"));
    assert!(matches!(r, Err(WorkspaceError::InsecureUrl(_))));
    assert_eq!(e.server.hits(), 0);
}

#[test]
fn text_directory_is_created_when_absent() {
    let e = env();
    e.server.put("main", tarball(&[file("top/README", "x")]));
    let ws = e.mgr.materialize(&RepoRef::new(e.server.template(), "main")).unwrap();
    assert!(ws.text_dir().is_dir());
}

#[test]
fn traversal_entry_is_rejected_and_nothing_escapes() {
    let e = env();
    e.server.put("main", tarball(&[file("top/ok", "x"), file("../evil", "x")]));
    match e.mgr.materialize(&RepoRef::new(e.server.template(), "main")) {
        Err(WorkspaceError::UnsafeEntry { path, .. }) => assert_eq!(path, "../evil"),
        other => panic!("{other:?}"),
    }
    let parent = e.mgr.area().parent().unwrap();
    assert!(!parent.join("evil").exists());
}

#[test]
fn hostile_archives_never_write_outside_the_area() {
    let e = env();
    let base = e.mgr.area().parent().unwrap().to_path_buf();
    let outside_before = snapshot(&e.outside);
    let siblings = |p: &Path| -> Vec<_> {
        fs::read_dir(p).unwrap().map(|d| d.unwrap().file_name()).collect::<Vec<_>>()
    };
    let base_before = siblings(&base);
    for (i, (label, archive)) in hostile_archives(&e.outside, 40).into_iter().enumerate() {
        let r = format!("h{i}");
        e.server.put(&r, archive);
        let res = e.mgr.materialize(&RepoRef::new(e.server.template(), &r));
        assert!(res.is_err(), "{label} was accepted");
        assert_eq!(snapshot(&e.outside), outside_before, "{label}");
        assert_eq!(siblings(&base), base_before, "{label}");
        assert_eq!(fs::read_to_string(e.outside.join("victim")).unwrap(), "original");
    }
}

#[test]
fn leases_are_exclusive_until_released() {
    let e = env();
    e.server.put(COMMIT, three_files());
    let ws = e.mgr.materialize(&RepoRef::new(e.server.template(), COMMIT)).unwrap();
    let lease = e.mgr.lease(&ws).unwrap();
    assert!(matches!(e.mgr.lease(&ws), Err(WorkspaceError::Busy)));
    drop(lease);
    let again = e.mgr.lease(&ws).unwrap();
    drop(again);

    let a = e.mgr.inline("a.miz", "x").unwrap();
    let b = e.mgr.inline("a.miz", "x").unwrap();
    assert_ne!(a.workspace().root, b.workspace().root);
    let _la = e.mgr.lease(a.workspace()).unwrap();
    let _lb = e.mgr.lease(b.workspace()).unwrap();
    let root = a.workspace().root.clone();
    drop(a);
    assert!(!root.exists());
}

#[test]
fn locate_article_cases() {
    let e = env();
    e.server.put(COMMIT, three_files());
    let ws = e.mgr.materialize(&RepoRef::new(e.server.template(), COMMIT)).unwrap();
    fs::write(ws.root.join("secret.miz"), "x").unwrap();
    std::os::unix::fs::symlink("../secret.miz", ws.root.join("text/link.miz")).unwrap();
    std::os::unix::fs::symlink(&e.outside, ws.root.join("text/out")).unwrap();

    let lease = e.mgr.lease(&ws).unwrap();
    assert!(lease.locate_article("a.miz").unwrap().ends_with("text/a.miz"));
    assert!(lease.locate_article("nested/b.miz").unwrap().ends_with("text/nested/b.miz"));
    assert!(matches!(locate_article(&ws, "../secret.miz"), Err(WorkspaceError::PathViolation(_))));
    assert!(matches!(locate_article(&ws, "/etc/passwd"), Err(WorkspaceError::PathViolation(_))));
    assert!(matches!(locate_article(&ws, "link.miz"), Err(WorkspaceError::PathViolation(_))));
    assert!(matches!(locate_article(&ws, "out/victim"), Err(WorkspaceError::PathViolation(_))));
    assert!(matches!(locate_article(&ws, "missing.miz"), Err(WorkspaceError::NotFound(_))));
    assert!(matches!(locate_article(&ws, "nested"), Err(WorkspaceError::NotFound(_))));
}
