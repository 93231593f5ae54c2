//! Wires the channel database, simulator, archive, tune engine and scanner
//! into one running system.

use std::path::Path;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use thiserror::Error;

use crate::archive::{ArchiveError, ArchiveStore, NewRow};
use crate::channel_db::ChannelDb;
use crate::config::{Config, ConfigError};
use crate::scanner::{Scanner, ScannerHandle, StopSignal};
use crate::sim::{Catalog, CatalogError, DeviceClass, SharedBeam, SimConfig, SimError, Simulator, DEFAULT_CATALOG};
use crate::tune::TuneEngine;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("preparing data directory: {0}")]
    Io(#[from] std::io::Error),
}

pub struct System {
    pub config: Config,
    pub db: Arc<ChannelDb>,
    pub store: Arc<ArchiveStore>,
    pub catalog: Arc<Catalog>,
    pub beam: SharedBeam,
    pub tunes: Arc<TuneEngine>,
    pub scanner: Arc<Scanner>,
    pub sim: Arc<Mutex<Simulator>>,
    sim_thread: Option<(Arc<StopSignal>, JoinHandle<()>)>,
    scanner_handle: Option<ScannerHandle>,
}

impl System {
    /// Opens the archive, loads the catalog (writing the default one if the
    /// configured file does not exist) and creates every channel. Nothing
    /// runs until [`System::start`].
    pub fn open(config: Config) -> Result<System, SystemError> {
        config.validate()?;
        std::fs::create_dir_all(&config.data_dir)?;
        let catalog_path = config.catalog_path();
        if !catalog_path.exists() {
            write_default_catalog(&catalog_path)?;
        }
        let catalog = Arc::new(Catalog::load(&catalog_path)?);

        let sim_config = SimConfig {
            seed: config.seed,
            tick_period_ms: config.sim_tick_ms,
            ..SimConfig::default()
        };
        let db = Arc::new(ChannelDb::with_queue_bound(config.subscriber_queue));
        catalog.install(&db, Some(sim_config.stale_after_ms()))?;

        let store = Arc::new(ArchiveStore::open(&config.data_dir)?);
        seed_inventory(&store, &catalog)?;

        let beam: SharedBeam = Arc::new(RwLock::new(catalog.reference_beam));
        let sim = Simulator::new(db.clone(), catalog.clone(), beam.clone(), sim_config)?.with_archive(store.clone());
        let tunes = Arc::new(TuneEngine::new(db.clone(), store.clone(), catalog.clone(), beam.clone()));
        let scanner = Arc::new(Scanner::new(db.clone(), store.clone(), tunes.clone()).with_catalog(catalog.clone()));

        Ok(System {
            config,
            db,
            store,
            catalog,
            beam,
            tunes,
            scanner,
            sim: Arc::new(Mutex::new(sim)),
            sim_thread: None,
            scanner_handle: None,
        })
    }

    /// Starts the simulator clock and both scanner schedules.
    pub fn start(&mut self) {
        self.start_simulation();
        if self.scanner_handle.is_none() {
            self.scanner_handle = Some(self.scanner.spawn(self.config.scan_interval(), self.config.tune_interval()));
        }
    }

    pub fn start_simulation(&mut self) {
        if self.sim_thread.is_some() {
            return;
        }
        let stop = Arc::new(StopSignal::default());
        let period = Duration::from_millis(self.config.sim_tick_ms);
        let dt = period.as_secs_f64();
        let sim = self.sim.clone();
        let s2 = stop.clone();
        let handle = std::thread::Builder::new()
            .name("device-sim".into())
            .spawn(move || {
                let t0 = Instant::now();
                let mut k = 1u32;
                while s2.wait_until(t0 + period * k) {
                    if let Err(e) = sim.lock().tick(dt) {
                        tracing::error!(error = %e, "simulation tick failed");
                    }
                    k += 1;
                }
            })
            .expect("spawn simulator thread");
        self.sim_thread = Some((stop, handle));
    }

    pub fn scanner_started_at_ms(&self) -> Option<i64> {
        self.scanner_handle.as_ref().map(ScannerHandle::started_at_ms)
    }

    pub fn shutdown(&mut self) {
        if let Some(h) = self.scanner_handle.take() {
            h.stop();
        }
        if let Some((stop, handle)) = self.sim_thread.take() {
            stop.stop();
            let _ = handle.join();
        }
    }
}

impl Drop for System {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn write_default_catalog(path: &Path) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, DEFAULT_CATALOG)
}

/// Fills the inventory tables from the catalog the first time a data
/// directory is used.
fn seed_inventory(store: &ArchiveStore, catalog: &Catalog) -> Result<(), ArchiveError> {
    if store.count("camac_modules")? > 0 {
        return Ok(());
    }
    let modules = catalog
        .devices
        .iter()
        .map(|d| {
            NewRow::new()
                .with("crate", i64::from(d.camac_address.crate_no))
                .with("slot", i64::from(d.camac_address.slot))
                .with("device_id", d.device_id.as_str())
                .with("class", d.class.as_str())
        })
        .collect();
    store.insert_many("camac_modules", modules)?;

    let mut crates = std::collections::BTreeMap::<u8, i64>::new();
    for d in &catalog.devices {
        *crates.entry(d.camac_address.crate_no).or_default() += 1;
    }
    store.insert_many(
        "camac_crates",
        crates
            .into_iter()
            .map(|(c, n)| NewRow::new().with("crate", i64::from(c)).with("n_modules", n))
            .collect(),
    )?;

    let resonators = catalog
        .devices
        .iter()
        .filter(|d| d.class == DeviceClass::Resonator)
        .map(|d| {
            let amp = catalog
                .golden_tune
                .get(&format!("{}:amplitude", d.device_id))
                .copied()
                .unwrap_or(0.0);
            NewRow::new()
                .with("device_id", d.device_id.as_str())
                .with("crate", i64::from(d.camac_address.crate_no))
                .with("slot", i64::from(d.camac_address.slot))
                .with("nominal_amplitude", amp)
                .with("status", "online")
        })
        .collect::<Vec<_>>();
    if !resonators.is_empty() {
        store.insert_many("resonators", resonators)?;
    }

    let presets = catalog
        .presets
        .iter()
        .map(|p| {
            NewRow::new()
                .with("device_id", p.device_id.as_str())
                .with("preset_name", p.preset_name.as_str())
                .with("position_steps", p.position_steps)
        })
        .collect::<Vec<_>>();
    if !presets.is_empty() {
        store.insert_many("stepper_presets", presets)?;
    }
    Ok(())
}
