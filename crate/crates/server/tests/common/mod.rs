#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use mizsrv_core::{ToolRegistry, ToolchainVersion, BUILTIN_VERSION};
use mizsrv_server::{spawn_server, BackgroundServer, Server, ServerConfig};
use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::Method;
use serde_json::{json, Value};
use tempfile::TempDir;

pub const TOKEN: &str = "test-token-8f3a";

pub struct Fixture {
    pub server: BackgroundServer,
    pub client: Client,
    pub area: TempDir,
}

pub fn start() -> Fixture {
    start_with(|_| {}, None)
}

/// Builtin toolchain whose verifier sleeps `delay` per line per pass.
pub fn slow_registry(delay: Duration) -> ToolRegistry {
    let mut reg = ToolRegistry::new();
    reg.insert(ToolchainVersion::builtin(BUILTIN_VERSION).with_line_delay(delay));
    reg
}

pub fn start_with(tweak: impl FnOnce(&mut ServerConfig), registry: Option<ToolRegistry>) -> Fixture {
    let area = tempfile::tempdir().unwrap();
    let mut cfg = ServerConfig::for_tests(TOKEN, area.path().join("ws"));
    tweak(&mut cfg);
    let server = match registry {
        Some(r) => Server::with_registry(cfg, Arc::new(r)),
        None => Server::build(cfg),
    }
    .unwrap();
    let server = spawn_server(server).unwrap();
    Fixture {
        server,
        client: Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .unwrap(),
        area,
    }
}

impl Fixture {
    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.server.base_url())
    }

    pub fn req(&self, method: Method, path: &str) -> RequestBuilder {
        self.client.request(method, self.url(path)).bearer_auth(TOKEN)
    }

    pub fn get(&self, path: &str) -> Response {
        self.req(Method::GET, path).send().unwrap()
    }

    pub fn post(&self, path: &str, body: &Value) -> Response {
        self.req(Method::POST, path).json(body).send().unwrap()
    }

    pub fn delete(&self, path: &str) -> Response {
        self.req(Method::DELETE, path).send().unwrap()
    }

    pub fn submit(&self, command: &str, text: &str) -> String {
        let resp = self.post("/api/v1/jobs", &inline_job(command, text));
        assert_eq!(resp.status(), 202);
        resp.json::<Value>().unwrap()["job_id"]
            .as_str()
            .unwrap()
            .to_owned()
    }

    pub fn status(&self, id: &str) -> Value {
        let resp = self.get(&format!("/api/v1/jobs/{id}"));
        assert_eq!(resp.status(), 200);
        resp.json().unwrap()
    }

    pub fn wait_until(&self, id: &str, pred: impl Fn(&Value) -> bool) -> Value {
        let deadline = Instant::now() + Duration::from_secs(30);
        loop {
            let st = self.status(id);
            if pred(&st) {
                return st;
            }
            assert!(Instant::now() < deadline, "timed out; last status {st}");
            thread::sleep(Duration::from_millis(10));
        }
    }

    pub fn wait_terminal(&self, id: &str) -> Value {
        self.wait_until(id, |st| !matches!(st["state"].as_str(), Some("queued" | "running")))
    }
}

pub fn inline_job(command: &str, text: &str) -> Value {
    json!({
        "command": command,
        "toolchain_version": BUILTIN_VERSION,
        "source": { "kind": "inline", "filename": "a.miz", "text": text },
    })
}

/// Well-formed article of exactly `lines` lines.
pub fn article(lines: usize) -> String {
    let mut out = String::from("environ\nbegin\n");
    let mut n = 2;
    while n + 3 <= lines {
        out.push_str("now\n  thus thesis;\nend;\n");
        n += 3;
    }
    while n < lines {
        out.push_str(":: filler\n");
        n += 1;
    }
    out
}

pub struct Schemas {
    validators: Vec<(String, jsonschema::Validator)>,
}

impl Schemas {
    pub fn load() -> Self {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema");
        let mut docs = Vec::new();
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            let doc: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
            docs.push((name, doc));
        }
        let mut opts = jsonschema::options().should_validate_formats(true);
        for (_, doc) in &docs {
            let id = doc["$id"].as_str().unwrap().to_owned();
            opts = opts.with_resource(id, jsonschema::Resource::from_contents(doc.clone()).unwrap());
        }
        let validators = docs
            .iter()
            .map(|(name, doc)| (name.clone(), opts.build(doc).unwrap()))
            .collect();
        Schemas { validators }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.validators.iter().map(|(n, _)| n.as_str())
    }

    pub fn check(&self, name: &str, doc: &Value) -> Result<(), String> {
        let (_, v) = self
            .validators
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("no schema {name}"));
        let errs: Vec<String> = v.iter_errors(doc).map(|e| e.to_string()).collect();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(format!("{name}: {errs:?} in {doc}"))
        }
    }

    pub fn assert(&self, name: &str, doc: &Value) {
        if let Err(e) = self.check(name, doc) {
            panic!("{e}");
        }
    }
}
