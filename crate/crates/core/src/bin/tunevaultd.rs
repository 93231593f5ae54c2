use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use tunevault::api::{self, AppState};
use tunevault::config::{Config, CONFIG_ENV};
use tunevault::system::System;

#[derive(Debug, Parser)]
#[command(name = "tunevaultd", version, about = "Channel database, tune archive and query daemon")]
struct Args {
    /// Config file. The TUNEVAULT_CONFIG environment variable takes precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn load_config(args: &Args) -> Result<Config, String> {
    let path = std::env::var_os(CONFIG_ENV).map(PathBuf::from).or_else(|| args.config.clone());
    let mut config = match path {
        Some(p) => Config::load(&p).map_err(|e| e.to_string())?,
        None => Config::default(),
    };
    if let Some(port) = args.port {
        config.port = port;
    }
    if let Some(dir) = &args.data_dir {
        config.data_dir = dir.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let args = Args::parse();
    let config = match load_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("tunevaultd: {e}");
            return ExitCode::from(2);
        }
    };
    let addr = SocketAddr::new(config.bind, config.port);

    let mut system = match System::open(config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("tunevaultd: {e}");
            return ExitCode::FAILURE;
        }
    };
    let summary = system.catalog.summary();
    tracing::info!(
        devices = summary.devices,
        resonators = summary.resonators,
        injectors = summary.injectors,
        channels = summary.channels,
        "catalog loaded"
    );
    system.start();
    let state = AppState::from_system(&system);

    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    let result = rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!(%addr, "listening");
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let server = tokio::spawn(api::serve(listener, state, async {
            let _ = rx.await;
        }));
        shutdown_signal().await;
        tracing::info!("shutting down");
        let _ = tx.send(());
        // open event streams never finish on their own
        match tokio::time::timeout(Duration::from_secs(2), server).await {
            Ok(Ok(r)) => r,
            _ => Ok(()),
        }
    });
    rt.shutdown_timeout(Duration::from_millis(100));
    system.shutdown();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tunevaultd: {e}");
            ExitCode::FAILURE
        }
    }
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("install SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
}
