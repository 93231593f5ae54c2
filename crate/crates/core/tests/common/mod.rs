//! Shared harness for the integration tests: an in-process server with a
//! response recorder, a CLI runner, and the independent oracles.
#![allow(dead_code)]

pub mod criteria;
pub mod oracle;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::body::Body;
use axum::extract::{MatchedPath, Request, State};
use axum::http::header::CONTENT_TYPE;
use axum::middleware::Next;
use axum::response::Response;
use axum::Router;
use futures::StreamExt;
use parking_lot::Mutex;
use tunevault::api::{self, AppState};
use tunevault::config::Config;
use tunevault::system::System;

/// One response as it left the server.
#[derive(Debug, Clone)]
pub struct Recorded {
    pub method: String,
    /// Route template, empty for unmatched paths.
    pub route: String,
    pub status: u16,
    pub streaming: bool,
    /// For event streams, whatever had been sent when the log was read.
    body: Arc<Mutex<Vec<u8>>>,
}

impl Recorded {
    pub fn body(&self) -> Vec<u8> {
        self.body.lock().clone()
    }
}

pub type Log = Arc<Mutex<Vec<Recorded>>>;

pub struct TestServer {
    pub base: String,
    pub system: System,
    pub log: Log,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
    _dir: Option<tempfile::TempDir>,
}

impl TestServer {
    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub fn take_log(&self) -> Vec<Recorded> {
        std::mem::take(&mut *self.log.lock())
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
        self.system.shutdown();
    }
}

pub fn config_in(dir: &Path) -> Config {
    Config {
        data_dir: dir.to_path_buf(),
        port: 0,
        seed: 7,
        ..Config::default()
    }
}

async fn record(State(log): State<Log>, req: Request, next: Next) -> Response {
    let method = req.method().to_string();
    let route = req
        .extensions()
        .get::<MatchedPath>()
        .map(|m| m.as_str().to_string())
        .unwrap_or_default();
    let resp = next.run(req).await;
    let status = resp.status().as_u16();
    let streaming = resp
        .headers()
        .get(CONTENT_TYPE)
        .is_some_and(|v| v.as_bytes().starts_with(b"text/event-stream"));
    let (parts, body) = resp.into_parts();
    let buf: Arc<Mutex<Vec<u8>>> = Arc::default();
    log.lock().push(Recorded {
        method,
        route,
        status,
        streaming,
        body: buf.clone(),
    });
    if streaming {
        let tee = body.into_data_stream().map(move |chunk| {
            if let Ok(c) = &chunk {
                buf.lock().extend_from_slice(c);
            }
            chunk
        });
        return Response::from_parts(parts, Body::from_stream(tee));
    }
    let bytes = axum::body::to_bytes(body, usize::MAX).await.expect("buffer body");
    buf.lock().extend_from_slice(&bytes);
    Response::from_parts(parts, Body::from(bytes))
}

/// Opens a system in a fresh directory and serves it on an ephemeral port.
/// Background threads (simulator, scanner) start only when `start` is set.
pub fn serve(edit: impl FnOnce(&mut Config), start: bool) -> TestServer {
    let dir = tempfile::tempdir().unwrap();
    let mut config = config_in(dir.path());
    edit(&mut config);
    let mut server = serve_system(System::open(config).expect("open system"), start);
    server._dir = Some(dir);
    server
}

pub fn serve_system(mut system: System, start: bool) -> TestServer {
    if start {
        system.start();
    }
    let log: Log = Arc::default();
    let router: Router = api::router(AppState::from_system(&system))
        .layer(axum::middleware::from_fn_with_state(log.clone(), record));
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            let (stop_tx, mut stop_rx) = tokio::sync::watch::channel(false);
            let server = tokio::spawn(async move {
                axum::serve(listener, router)
                    .with_graceful_shutdown(async move {
                        let _ = stop_rx.changed().await;
                    })
                    .await
            });
            let _ = rx.await;
            let _ = stop_tx.send(true);
            let _ = tokio::time::timeout(Duration::from_millis(500), server).await;
        });
        rt.shutdown_timeout(Duration::from_millis(100));
    });
    TestServer {
        base,
        system,
        log,
        stop: Some(tx),
        thread: Some(thread),
        _dir: None,
    }
}

pub struct Http {
    pub status: u16,
    pub body: Vec<u8>,
}

impl Http {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn code(&self) -> String {
        self.json()["code"].as_str().unwrap_or_default().to_string()
    }
}

pub fn http(method: &str, url: &str, body: Option<&str>) -> Http {
    let client = reqwest::blocking::Client::new();
    let mut req = client.request(method.parse().unwrap(), url);
    if let Some(b) = body {
        req = req.header("content-type", "application/json").body(b.to_string());
    }
    let resp = req.send().expect("request");
    Http {
        status: resp.status().as_u16(),
        body: resp.bytes().unwrap().to_vec(),
    }
}

pub struct CtlOutput {
    pub code: i32,
    pub stdout: Vec<u8>,
    pub stderr: String,
}

impl CtlOutput {
    pub fn stdout_str(&self) -> String {
        String::from_utf8(self.stdout.clone()).unwrap()
    }
}

pub fn ctl_path() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_tunevaultctl"))
}

/// Runs the real `tunevaultctl` binary against `base`.
pub fn ctl(base: &str, args: &[&str]) -> CtlOutput {
    let out = Command::new(ctl_path())
        .env_remove("TUNEVAULT_URL")
        .arg("--url")
        .arg(base)
        .args(args)
        .output()
        .expect("run tunevaultctl");
    CtlOutput {
        code: out.status.code().unwrap_or(-1),
        stdout: out.stdout,
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}
