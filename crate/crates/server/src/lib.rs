//! HTTP(S) front end for the job engine.
//!
//! [`Server::build`] wires configuration into an engine and a router;
//! [`Server::serve`] runs it until a shutdown future resolves.
//! [`spawn_background`] runs a server on its own runtime thread for tests
//! and benchmarks.

pub mod api;
pub mod config;

use std::future::Future;
use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum_server::tls_rustls::RustlsConfig;
use axum_server::Handle;
use mizsrv_core::toolchain::ToolchainError;
use mizsrv_core::{JobEngine, MessageCatalog, ToolExecutor, ToolRegistry, WorkspaceManager};
use thiserror::Error;

pub use api::{router, AppState, ROUTES};
pub use config::{ConfigError, Mode, ServerConfig, TlsConfig};

const DRAIN_GRACE: Duration = Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("workspace area: {0}")]
    Workspace(#[from] mizsrv_core::workspace::WorkspaceError),
    #[error("TLS setup: {0}")]
    Tls(String),
    #[error("bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub struct Server {
    config: ServerConfig,
    engine: Arc<JobEngine>,
    state: Arc<AppState>,
}

impl Server {
    /// Validates `config` and starts the engine's worker threads.
    pub fn build(config: ServerConfig) -> Result<Self, ServerError> {
        let registry = Arc::new(config.registry()?);
        config.validate()?;
        Self::with_registry(config, registry)
    }

    /// Like [`Server::build`] but with a registry assembled in code.
    pub fn with_registry(
        config: ServerConfig,
        registry: Arc<ToolRegistry>,
    ) -> Result<Self, ServerError> {
        config.validate()?;
        if registry.is_empty() {
            return Err(ConfigError::Toolchain(ToolchainError::EmptyRegistry).into());
        }
        let workspaces = Arc::new(WorkspaceManager::new(config.workspace_config())?);
        let executor = ToolExecutor::new(Arc::clone(&registry), workspaces);
        let engine = Arc::new(JobEngine::new(config.engine_config(), Arc::new(executor)));
        let state = Arc::new(AppState {
            engine: Arc::clone(&engine),
            registry,
            tokens: config.api_tokens.clone(),
            poll_hint_ms: config.limits.poll_hint_ms,
            max_inline_bytes: config.limits.max_inline_bytes,
            catalog: MessageCatalog::builtin(),
        });
        Ok(Server {
            config,
            engine,
            state,
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn engine(&self) -> &Arc<JobEngine> {
        &self.engine
    }

    pub fn router(&self) -> axum::Router {
        router(Arc::clone(&self.state))
    }

    pub fn bind(&self) -> Result<TcpListener, ServerError> {
        let addr = self.config.bind;
        let l = TcpListener::bind(addr).map_err(|source| ServerError::Bind { addr, source })?;
        l.set_nonblocking(true)?;
        Ok(l)
    }

    /// Serves on `listener` until `shutdown` resolves, then drains
    /// connections and stops the engine.
    pub async fn serve(
        self,
        listener: TcpListener,
        shutdown: impl Future<Output = ()> + Send + 'static,
    ) -> Result<(), ServerError> {
        let handle = Handle::new();
        let h = handle.clone();
        tokio::spawn(async move {
            shutdown.await;
            h.graceful_shutdown(Some(DRAIN_GRACE));
        });
        let app = self.router().into_make_service();
        match &self.config.tls {
            Some(tls) => {
                let rustls = load_tls(tls).await?;
                axum_server::from_tcp_rustls(listener, rustls)
                    .handle(handle)
                    .serve(app)
                    .await?
            }
            None => axum_server::from_tcp(listener).handle(handle).serve(app).await?,
        }
        let engine = self.engine;
        tokio::task::spawn_blocking(move || engine.shutdown())
            .await
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(())
    }
}

async fn load_tls(tls: &TlsConfig) -> Result<RustlsConfig, ServerError> {
    let _ = rustls::crypto::aws_lc_rs::default_provider().install_default();
    RustlsConfig::from_pem_file(&tls.cert, &tls.key)
        .await
        .map_err(|e| {
            ServerError::Tls(format!(
                "{} / {}: {e}",
                tls.cert.display(),
                tls.key.display()
            ))
        })
}

/// A server running on a private runtime thread; shut down on drop.
pub struct BackgroundServer {
    addr: SocketAddr,
    tls: bool,
    engine: Arc<JobEngine>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<Result<(), ServerError>>>,
}

impl BackgroundServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        let scheme = if self.tls { "https" } else { "http" };
        format!("{scheme}://{}", self.addr)
    }

    pub fn engine(&self) -> &Arc<JobEngine> {
        &self.engine
    }

    pub fn shutdown(mut self) -> Result<(), ServerError> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> Result<(), ServerError> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| {
                Err(std::io::Error::other("server thread panicked").into())
            }),
            None => Ok(()),
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

/// Builds and serves `config` on a new thread. The listener is bound before
/// this returns, so `addr()` is immediately connectable.
pub fn spawn_background(config: ServerConfig) -> Result<BackgroundServer, ServerError> {
    let server = Server::build(config)?;
    spawn_server(server)
}

pub fn spawn_server(server: Server) -> Result<BackgroundServer, ServerError> {
    let listener = server.bind()?;
    let addr = listener.local_addr()?;
    let tls = server.config.tls.is_some();
    let engine = Arc::clone(&server.engine);
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name("mizsrv-server".to_owned())
        .spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()?;
            rt.block_on(server.serve(listener, async move {
                let _ = rx.await;
            }))
        })?;
    Ok(BackgroundServer {
        addr,
        tls,
        engine,
        stop: Some(tx),
        thread: Some(thread),
    })
}

/// Default path of the server configuration file.
pub fn default_config_path() -> PathBuf {
    PathBuf::from("/etc/mizsrv/server.toml")
}
