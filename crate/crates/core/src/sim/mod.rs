//! Simulated beamline.
//!
//! Each tick moves every device toward its setpoint at its slew rate,
//! publishes noisy readbacks, evaluates the beam transmission model and
//! random-walks the cryostat temperatures. All output goes through
//! channel-db writes.
//!
//! Transmission is `exp(-Σ ((x_i - g_i·f_i) / w_i)²)` over the scaled
//! setpoints, where `x_i` is the device position, `g_i` the golden value,
//! `f_i` the scale factor from the catalog reference beam to the current
//! beam and `w_i` 5% of the setpoint span.

mod catalog;

use std::sync::Arc;

use parking_lot::RwLock;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

pub use catalog::{
    load_catalog, signal_units, CamacAddress, Catalog, CatalogError, CatalogSummary, DeviceClass, DeviceDescriptor,
    Limits, SetpointInfo, StepperPreset, CRATE_RANGE, CRYO_STATUS, DEFAULT_CATALOG, SLOT_RANGE, WIDTH_FRACTION,
};

use crate::archive::{ArchiveStore, NewRow};
use crate::channel_db::{ChannelDb, ChannelDbError, Quality, Value};
use crate::time::now_ms;
use crate::tune::{scale_factors, BeamParameters};

/// Beam species the machine is currently set up for.
pub type SharedBeam = Arc<RwLock<BeamParameters>>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("device {device} has no preset {preset}")]
    UnknownPreset { device: String, preset: String },
    #[error("tick step must be positive, got {0}")]
    BadStep(f64),
    #[error(transparent)]
    Channel(#[from] ChannelDbError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CryoModel {
    pub nominal_k: f64,
    pub threshold_k: f64,
    /// Mean-reversion rate toward `nominal_k`, per second.
    pub reversion_per_s: f64,
}

impl Default for CryoModel {
    fn default() -> Self {
        CryoModel {
            nominal_k: 4.5,
            threshold_k: 4.8,
            reversion_per_s: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// Nominal tick period; readbacks older than 5 periods read as stale.
    pub tick_period_ms: u64,
    /// Beam current delivered at full transmission.
    pub source_current_ena: f64,
    pub cryo: CryoModel,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            tick_period_ms: 200,
            source_current_ena: 100.0,
            cryo: CryoModel::default(),
        }
    }
}

impl SimConfig {
    pub fn stale_after_ms(&self) -> u64 {
        5 * self.tick_period_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CryoAlarm {
    pub raised_at: i64,
    pub channel: String,
    pub temperature_k: f64,
    pub threshold_k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickReport {
    pub transmission: f64,
    pub alarms: Vec<CryoAlarm>,
}

struct Actuator {
    info: SetpointInfo,
    position: f64,
    slew_per_s: f64,
    noise_sigma: f64,
}

struct CryoSensor {
    temperature_channel: String,
    status_channel: String,
    temperature: f64,
    sigma: f64,
    in_alarm: bool,
}

struct Monitor {
    current: String,
    transmission: String,
}

pub struct Simulator {
    db: Arc<ChannelDb>,
    catalog: Arc<Catalog>,
    beam: SharedBeam,
    archive: Option<Arc<ArchiveStore>>,
    rng: ChaCha8Rng,
    actuators: Vec<Actuator>,
    cryo: Vec<CryoSensor>,
    monitors: Vec<Monitor>,
    config: SimConfig,
    transmission: f64,
}

impl Simulator {
    /// Builds a simulator over an installed catalog. Device positions start
    /// at the current setpoint values.
    pub fn new(db: Arc<ChannelDb>, catalog: Arc<Catalog>, beam: SharedBeam, config: SimConfig) -> Result<Self, SimError> {
        let mut actuators = Vec::new();
        for info in catalog.setpoints() {
            let d = &catalog.devices[info.device];
            let position = db
                .read(&info.channel)?
                .value
                .as_f64()
                .unwrap_or(info.limits.min);
            actuators.push(Actuator {
                info: info.clone(),
                position: info.limits.clamp(position),
                slew_per_s: d.slew_per_s,
                noise_sigma: d.noise_sigma,
            });
        }
        let mut cryo = Vec::new();
        let mut monitors = Vec::new();
        for d in &catalog.devices {
            let find = |sig: &str| d.channels.iter().find(|c| c.ends_with(sig)).cloned();
            match d.class {
                DeviceClass::CryoSensor => {
                    if let (Some(t), Some(s)) = (find(":temperature"), find(":status")) {
                        cryo.push(CryoSensor {
                            temperature_channel: t,
                            status_channel: s,
                            temperature: config.cryo.nominal_k,
                            sigma: d.noise_sigma,
                            in_alarm: false,
                        });
                    }
                }
                DeviceClass::BeamMonitor => {
                    if let (Some(c), Some(t)) = (find(":current"), find(":transmission")) {
                        monitors.push(Monitor {
                            current: c,
                            transmission: t,
                        });
                    }
                }
                _ => {}
            }
        }
        Ok(Simulator {
            db,
            catalog,
            beam,
            archive: None,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            actuators,
            cryo,
            monitors,
            config,
            transmission: 0.0,
        })
    }

    /// Cryo alarms are also appended to the archive's `cryo_alarms` table.
    pub fn with_archive(mut self, archive: Arc<ArchiveStore>) -> Self {
        self.archive = Some(archive);
        self
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn transmission(&self) -> f64 {
        self.transmission
    }

    pub fn position(&self, setpoint: &str) -> Option<f64> {
        self.actuators
            .iter()
            .find(|a| a.info.channel == setpoint)
            .map(|a| a.position)
    }

    pub fn tick(&mut self, dt_s: f64) -> Result<TickReport, SimError> {
        if !(dt_s.is_finite() && dt_s > 0.0) {
            return Err(SimError::BadStep(dt_s));
        }
        for a in &mut self.actuators {
            let target = self
                .db
                .read(&a.info.channel)?
                .value
                .as_f64()
                .map(|v| a.info.limits.clamp(v))
                .unwrap_or(a.position);
            let delta = target - a.position;
            a.position = if a.slew_per_s > 0.0 {
                let step = a.slew_per_s * dt_s;
                a.position + delta.clamp(-step, step)
            } else {
                target
            };
            a.position = a.info.limits.clamp(a.position);

            if let Some(rb) = &a.info.readback {
                let value = if a.info.integer {
                    Value::Int(a.position.round() as i64)
                } else {
                    let noise = if a.noise_sigma > 0.0 {
                        let z: f64 = StandardNormal.sample(&mut self.rng);
                        z * a.noise_sigma
                    } else {
                        0.0
                    };
                    Value::Float(a.info.limits.clamp(a.position + noise))
                };
                self.db.write(rb, value)?;
            }
        }

        let beam = *self.beam.read();
        let positions: std::collections::HashMap<&str, f64> =
            self.actuators.iter().map(|a| (a.info.channel.as_str(), a.position)).collect();
        self.transmission = transmission(&self.catalog, &beam, |info| positions.get(info.channel.as_str()).copied());
        for m in &self.monitors {
            self.db
                .write(&m.current, Value::Float(self.config.source_current_ena * self.transmission))?;
            self.db.write(&m.transmission, Value::Float(self.transmission))?;
        }

        let alarms = self.step_cryo(dt_s)?;
        Ok(TickReport {
            transmission: self.transmission,
            alarms,
        })
    }

    fn step_cryo(&mut self, dt_s: f64) -> Result<Vec<CryoAlarm>, SimError> {
        let model = self.config.cryo;
        let mut alarms = Vec::new();
        for s in &mut self.cryo {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            s.temperature += model.reversion_per_s * (model.nominal_k - s.temperature) * dt_s + s.sigma * dt_s.sqrt() * z;
            let alarm = s.temperature > model.threshold_k;
            if alarm && !s.in_alarm {
                alarms.push(CryoAlarm {
                    raised_at: now_ms(),
                    channel: s.temperature_channel.clone(),
                    temperature_k: s.temperature,
                    threshold_k: model.threshold_k,
                });
            }
            s.in_alarm = alarm;
            let quality = if alarm { Quality::Alarm } else { Quality::Ok };
            self.db
                .write_with_quality(&s.temperature_channel, Value::Float(s.temperature), quality)?;
            let status = CRYO_STATUS[alarm as usize];
            self.db
                .write_with_quality(&s.status_channel, Value::Enum(status.to_string()), quality)?;
        }
        if let Some(archive) = &self.archive {
            for a in &alarms {
                let row = NewRow::new()
                    .with("raised_at", a.raised_at)
                    .with("channel", a.channel.as_str())
                    .with("temperature_k", a.temperature_k)
                    .with("threshold_k", a.threshold_k)
                    .with("acknowledged", false);
                if let Err(e) = archive.insert("cryo_alarms", row) {
                    tracing::warn!(error = %e, channel = %a.channel, "could not archive cryo alarm");
                }
            }
        }
        Ok(alarms)
    }

    /// Overrides a cryostat temperature; the next tick continues from it.
    pub fn force_temperature(&mut self, channel: &str, kelvin: f64) -> bool {
        match self.cryo.iter_mut().find(|s| s.temperature_channel == channel) {
            Some(s) => {
                s.temperature = kelvin;
                true
            }
            None => false,
        }
    }

    pub fn lookup_preset(&self, device_id: &str, preset_name: &str) -> Result<i64, SimError> {
        lookup_preset(&self.catalog, device_id, preset_name)
    }

    /// Writes a stored stepper position to the device's setpoint.
    pub fn apply_preset(&self, device_id: &str, preset_name: &str) -> Result<i64, SimError> {
        let steps = self.lookup_preset(device_id, preset_name)?;
        let sp = self
            .actuators
            .iter()
            .find(|a| self.catalog.devices[a.info.device].device_id == device_id)
            .ok_or_else(|| SimError::UnknownDevice(device_id.to_string()))?;
        self.db.write(&sp.info.channel, Value::Int(steps))?;
        Ok(steps)
    }
}

pub fn lookup_preset(catalog: &Catalog, device_id: &str, preset_name: &str) -> Result<i64, SimError> {
    if catalog.device(device_id).is_none() {
        return Err(SimError::UnknownDevice(device_id.to_string()));
    }
    catalog
        .presets
        .iter()
        .find(|p| p.device_id == device_id && p.preset_name == preset_name)
        .map(|p| p.position_steps)
        .ok_or_else(|| SimError::UnknownPreset {
            device: device_id.to_string(),
            preset: preset_name.to_string(),
        })
}

/// Evaluates the transmission model for `beam`, reading each scaled
/// setpoint's actual value through `value_of`. Missing values count as
/// perfectly tuned.
pub fn transmission(catalog: &Catalog, beam: &BeamParameters, value_of: impl Fn(&SetpointInfo) -> Option<f64>) -> f64 {
    let factors = scale_factors(&catalog.reference_beam, beam);
    let mut chi2 = 0.0;
    for info in catalog.scaled_setpoints() {
        let (Some(golden), Some(x)) = (catalog.golden_for(info, &factors), value_of(info)) else {
            continue;
        };
        let width = WIDTH_FRACTION * info.limits.span();
        let d = (x - golden) / width;
        chi2 += d * d;
    }
    (-chi2).exp()
}
