//! Archiving daemon: scheduled snapshots of the critical channels and
//! scheduled tune captures.
//!
//! Each schedule runs on its own thread. The k-th tick is due at
//! `t0 + k·interval`; a capture that runs past one or more due times skips
//! those ticks (counted in `skipped_ticks`) instead of queueing them.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};

use crate::archive::{ArchiveError, ArchiveStore, NewRow, Trigger};
use crate::channel_db::{ChannelDb, SnapshotFilter};
use crate::sim::{Catalog, DeviceClass};
use crate::time::now_ms;
use crate::tune::{TuneEngine, TuneError};

/// Tune capture period used at the facility.
pub const PRODUCTION_TUNE_INTERVAL: Duration = Duration::from_secs(4 * 60 * 60);
pub const DEFAULT_SCAN_INTERVAL: Duration = Duration::from_secs(10);
pub const DEFAULT_TUNE_INTERVAL: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureKind {
    Snapshot,
    Tune,
}

#[derive(Debug, Default)]
pub struct ScannerMetrics {
    pub scheduled_snapshots: AtomicU64,
    pub scheduled_tunes: AtomicU64,
    pub skipped_ticks: AtomicU64,
    pub failures: AtomicU64,
}

pub struct Scanner {
    db: Arc<ChannelDb>,
    store: Arc<ArchiveStore>,
    tunes: Arc<TuneEngine>,
    catalog: Option<Arc<Catalog>>,
    metrics: ScannerMetrics,
    snapshot_lock: Mutex<()>,
    tune_lock: Mutex<()>,
}

impl Scanner {
    pub fn new(db: Arc<ChannelDb>, store: Arc<ArchiveStore>, tunes: Arc<TuneEngine>) -> Self {
        Scanner {
            db,
            store,
            tunes,
            catalog: None,
            metrics: ScannerMetrics::default(),
            snapshot_lock: Mutex::new(()),
            tune_lock: Mutex::new(()),
        }
    }

    /// With a catalog, every scheduled snapshot also records one
    /// `beam_measurement` row per target-line monitor.
    pub fn with_catalog(mut self, catalog: Arc<Catalog>) -> Self {
        self.catalog = Some(catalog);
        self
    }

    pub fn metrics(&self) -> &ScannerMetrics {
        &self.metrics
    }

    pub fn skipped_ticks(&self) -> u64 {
        self.metrics.skipped_ticks.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self, trigger: Trigger) -> Result<i64, ArchiveError> {
        let _g = self.snapshot_lock.lock();
        let snap = self.db.snapshot(SnapshotFilter::CriticalOnly);
        self.store.persist_snapshot(&snap, trigger)
    }

    pub fn capture_tune(&self, label: &str, provenance: Trigger) -> Result<i64, TuneError> {
        let _g = self.tune_lock.lock();
        self.tunes.archive_tune(label, provenance)
    }

    /// Manual capture requested from the API or CLI.
    pub fn trigger_now(&self, kind: CaptureKind, label: Option<&str>) -> Result<i64, TuneError> {
        match kind {
            CaptureKind::Snapshot => Ok(self.snapshot(Trigger::Manual)?),
            CaptureKind::Tune => self.capture_tune(label.unwrap_or("manual"), Trigger::Manual),
        }
    }

    fn record_beam(&self) -> Result<(), ArchiveError> {
        let Some(catalog) = &self.catalog else {
            return Ok(());
        };
        let taken_at = now_ms();
        let mut rows = Vec::new();
        for d in catalog.devices.iter().filter(|d| d.class == DeviceClass::BeamMonitor) {
            let Some(line) = d.target_line() else { continue };
            let read = |sig: &str| {
                self.db
                    .read(&format!("{}:{sig}", d.device_id))
                    .ok()
                    .and_then(|r| r.value.as_f64())
            };
            if let (Some(current), Some(transmission)) = (read("current"), read("transmission")) {
                rows.push(
                    NewRow::new()
                        .with("taken_at", taken_at)
                        .with("target_line", line)
                        .with("current_enA", current)
                        .with("transmission", transmission),
                );
            }
        }
        if rows.is_empty() {
            return Ok(());
        }
        self.store.insert_many("beam_measurement", rows).map(|_| ())
    }

    fn scheduled(&self, kind: CaptureKind) {
        let result = match kind {
            CaptureKind::Snapshot => self
                .snapshot(Trigger::Scheduled)
                .and_then(|id| self.record_beam().map(|_| id))
                .map_err(TuneError::from),
            CaptureKind::Tune => self.capture_tune("scheduled", Trigger::Scheduled),
        };
        match result {
            Ok(id) => {
                let counter = match kind {
                    CaptureKind::Snapshot => &self.metrics.scheduled_snapshots,
                    CaptureKind::Tune => &self.metrics.scheduled_tunes,
                };
                counter.fetch_add(1, Ordering::Relaxed);
                tracing::debug!(?kind, id, "scheduled capture");
            }
            Err(e) => {
                self.metrics.failures.fetch_add(1, Ordering::Relaxed);
                tracing::error!(?kind, error = %e, "scheduled capture failed");
            }
        }
    }

    /// Starts both schedules. Dropping or stopping the handle ends them.
    pub fn spawn(self: &Arc<Self>, scan_interval: Duration, tune_interval: Duration) -> ScannerHandle {
        assert!(!scan_interval.is_zero() && !tune_interval.is_zero(), "intervals must be positive");
        let stop = Arc::new(StopSignal::default());
        let t0 = Instant::now();
        let started_at_ms = now_ms();
        let threads = [(CaptureKind::Snapshot, scan_interval), (CaptureKind::Tune, tune_interval)]
            .into_iter()
            .map(|(kind, interval)| {
                let scanner = Arc::clone(self);
                let stop = Arc::clone(&stop);
                std::thread::Builder::new()
                    .name(format!("scanner-{kind:?}").to_lowercase())
                    .spawn(move || {
                        run_schedule(t0, interval, &stop, &scanner.metrics.skipped_ticks, || scanner.scheduled(kind))
                    })
                    .expect("spawn scanner thread")
            })
            .collect();
        ScannerHandle {
            stop,
            threads,
            started_at_ms,
        }
    }
}

#[derive(Default)]
pub(crate) struct StopSignal {
    stopped: Mutex<bool>,
    cv: Condvar,
}

impl StopSignal {
    pub(crate) fn stop(&self) {
        *self.stopped.lock() = true;
        self.cv.notify_all();
    }

    /// Sleeps until `deadline`; returns false if stopped first.
    pub(crate) fn wait_until(&self, deadline: Instant) -> bool {
        let mut stopped = self.stopped.lock();
        while !*stopped {
            if self.cv.wait_until(&mut stopped, deadline).timed_out() {
                return !*stopped;
            }
        }
        false
    }
}

/// Drift-free loop: tick k is due at `t0 + k·interval` for k = 1, 2, ...
pub(crate) fn run_schedule(t0: Instant, interval: Duration, stop: &StopSignal, skipped: &AtomicU64, mut tick: impl FnMut()) {
    let mut k: u32 = 1;
    loop {
        let due = t0 + interval * k;
        if !stop.wait_until(due) {
            return;
        }
        tick();
        let elapsed = Instant::now().saturating_duration_since(t0);
        let next = (elapsed.as_nanos() / interval.as_nanos()) as u32 + 1;
        if next > k + 1 {
            skipped.fetch_add(u64::from(next - k - 1), Ordering::Relaxed);
        }
        k = next.max(k + 1);
    }
}

pub struct ScannerHandle {
    stop: Arc<StopSignal>,
    threads: Vec<JoinHandle<()>>,
    started_at_ms: i64,
}

impl ScannerHandle {
    /// Wall-clock time of t0; tick k is due at `started_at_ms + k·interval`.
    pub fn started_at_ms(&self) -> i64 {
        self.started_at_ms
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.stop();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ScannerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}
