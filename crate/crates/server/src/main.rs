use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mizsrv_server::{default_config_path, Server, ServerConfig, ServerError};
use tracing_subscriber::EnvFilter;

/// Remote Mizar verification server.
#[derive(Debug, Parser)]
#[command(name = "mizsrv-server", version)]
struct Args {
    /// TOML configuration file.
    #[arg(short, long, env = "MIZSRV_CONFIG")]
    config: Option<PathBuf>,
    /// Validate the configuration and exit.
    #[arg(long)]
    check: bool,
}

fn load(args: &Args) -> Result<ServerConfig, ServerError> {
    let path = args.config.clone().unwrap_or_else(default_config_path);
    let mut cfg = if args.config.is_some() || path.exists() {
        ServerConfig::load(&path)?
    } else {
        ServerConfig::default()
    };
    cfg.apply_env(|k| std::env::var(k).ok())?;
    Ok(cfg)
}

async fn shutdown_signal() {
    let ctrl_c = tokio::signal::ctrl_c();
    let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
        .expect("install SIGTERM handler");
    tokio::select! {
        _ = ctrl_c => {}
        _ = term.recv() => {}
    }
    tracing::info!("shutdown requested");
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();

    let server = match load(&args).and_then(Server::build) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("mizsrv-server: {e}");
            return ExitCode::from(2);
        }
    };
    if args.check {
        println!("configuration ok");
        return ExitCode::SUCCESS;
    }
    let listener = match server.bind() {
        Ok(l) => l,
        Err(e) => {
            eprintln!("mizsrv-server: {e}");
            return ExitCode::from(2);
        }
    };
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("mizsrv-server: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Ok(addr) = listener.local_addr() {
        let scheme = if server.config().tls.is_some() { "https" } else { "http" };
        tracing::info!("listening on {scheme}://{addr}");
    }
    match rt.block_on(server.serve(listener, shutdown_signal())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(ServerError::Tls(e)) => {
            eprintln!("mizsrv-server: TLS setup: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("mizsrv-server: {e}");
            ExitCode::FAILURE
        }
    }
}
