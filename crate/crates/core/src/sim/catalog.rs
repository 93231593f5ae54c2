//! Device catalog: the beamline inventory, stepper presets and golden tune.
//!
//! Channel conventions, by the last segment of the channel name:
//! a channel with a `limits` entry is a setpoint; `<setpoint>_rb` is its
//! readback; `phase` setpoints are never scaled; stepper positions are
//! integer steps; `status` is an enum; everything else is a float readback.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel_db::{is_valid_name, ChannelDb, ChannelDbError, ChannelSpec, Role, Value, ValueTag};
use crate::tune::{BeamParameters, ScalingLaw};

/// Shipped default catalog.
pub const DEFAULT_CATALOG: &str = include_str!("../../assets/default_catalog.toml");

pub const CRATE_RANGE: std::ops::RangeInclusive<u8> = 1..=62;
pub const SLOT_RANGE: std::ops::RangeInclusive<u8> = 1..=23;

/// Transmission-model width as a fraction of a setpoint's span.
pub const WIDTH_FRACTION: f64 = 0.05;

pub const CRYO_STATUS: [&str; 2] = ["ok", "alarm"];

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog parse error: {0}")]
    Parse(String),
    #[error("devices {first} and {second} share CAMAC crate {crate_no} slot {slot}")]
    DuplicateAddress {
        first: String,
        second: String,
        crate_no: u8,
        slot: u8,
    },
    #[error("{channel}: limit min {min} is not below max {max}")]
    LimitOrder { channel: String, min: f64, max: f64 },
    #[error("{device}: CAMAC address crate {crate_no} slot {slot} out of range")]
    AddressRange { device: String, crate_no: u8, slot: u8 },
    #[error("{device}: class {class} requires scaling law {expected}, got {got}")]
    LawMismatch {
        device: String,
        class: DeviceClass,
        expected: ScalingLaw,
        got: ScalingLaw,
    },
    #[error("invalid catalog: {0}")]
    Invalid(String),
    #[error("golden tune has no value for {0}")]
    GoldenTuneIncomplete(String),
    #[error(transparent)]
    Channel(#[from] ChannelDbError),
    #[error("reading catalog: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceClass {
    Resonator,
    DipoleMagnet,
    QuadrupoleMagnet,
    ElectrostaticDeflector,
    StepperInsertion,
    BeamMonitor,
    CryoSensor,
}

impl DeviceClass {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceClass::Resonator => "resonator",
            DeviceClass::DipoleMagnet => "dipole_magnet",
            DeviceClass::QuadrupoleMagnet => "quadrupole_magnet",
            DeviceClass::ElectrostaticDeflector => "electrostatic_deflector",
            DeviceClass::StepperInsertion => "stepper_insertion",
            DeviceClass::BeamMonitor => "beam_monitor",
            DeviceClass::CryoSensor => "cryo_sensor",
        }
    }

    pub fn scaling_law(self) -> ScalingLaw {
        match self {
            DeviceClass::Resonator => ScalingLaw::RfAmplitude,
            DeviceClass::DipoleMagnet | DeviceClass::QuadrupoleMagnet => ScalingLaw::Magnetic,
            DeviceClass::ElectrostaticDeflector => ScalingLaw::Electrostatic,
            _ => ScalingLaw::None,
        }
    }
}

impl fmt::Display for DeviceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CamacAddress {
    #[serde(rename = "crate")]
    pub crate_no: u8,
    pub slot: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    pub min: f64,
    pub max: f64,
}

impl Limits {
    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceDescriptor {
    pub device_id: String,
    pub class: DeviceClass,
    pub scaling_law: ScalingLaw,
    pub camac_address: CamacAddress,
    pub channels: Vec<String>,
    #[serde(default)]
    pub limits: BTreeMap<String, Limits>,
    #[serde(default)]
    pub slew_per_s: f64,
    #[serde(default)]
    pub noise_sigma: f64,
}

impl DeviceDescriptor {
    /// Injector ion sources live under the `SRC` system.
    pub fn is_injector(&self) -> bool {
        self.device_id.starts_with("SRC:")
    }

    /// Target line served by a beam monitor named `BM:TGT<n>`.
    pub fn target_line(&self) -> Option<i64> {
        if self.class != DeviceClass::BeamMonitor {
            return None;
        }
        self.device_id.strip_prefix("BM:TGT")?.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperPreset {
    pub device_id: String,
    pub preset_name: String,
    pub position_steps: i64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    reference_beam: BeamParameters,
    #[serde(default, rename = "device")]
    devices: Vec<DeviceDescriptor>,
    #[serde(default, rename = "stepper_preset")]
    presets: Vec<StepperPreset>,
    #[serde(default)]
    golden_tune: BTreeMap<String, f64>,
}

/// What the simulator and the tune engine need to know about one setpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct SetpointInfo {
    pub channel: String,
    pub device: usize,
    pub law: ScalingLaw,
    pub limits: Limits,
    pub integer: bool,
    pub readback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogSummary {
    pub devices: usize,
    pub resonators: usize,
    pub injectors: usize,
    pub beam_monitors: usize,
    pub target_lines: Vec<i64>,
    pub channels: usize,
    pub setpoints: usize,
}

#[derive(Debug, Clone)]
pub struct Catalog {
    pub reference_beam: BeamParameters,
    pub devices: Vec<DeviceDescriptor>,
    pub presets: Vec<StepperPreset>,
    pub golden_tune: BTreeMap<String, f64>,
    setpoints: BTreeMap<String, SetpointInfo>,
    device_index: HashMap<String, usize>,
}

fn signal(channel: &str) -> &str {
    channel.rsplit(':').next().unwrap_or(channel)
}

/// Units shown for a channel, by signal name.
pub fn signal_units(channel: &str) -> &'static str {
    let s = signal(channel);
    match s.strip_suffix("_rb").unwrap_or(s) {
        "amplitude" => "MV/m",
        "phase" => "deg",
        "field" => "T",
        "gradient" => "T/m",
        "voltage" => "kV",
        "position" => "steps",
        "current" => "enA",
        "temperature" => "K",
        _ => "",
    }
}

impl Catalog {
    pub fn load(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
        let text = std::fs::read_to_string(path)?;
        Catalog::parse(&text)
    }

    pub fn default_catalog() -> Catalog {
        Catalog::parse(DEFAULT_CATALOG).expect("shipped catalog is valid")
    }

    pub fn parse(text: &str) -> Result<Catalog, CatalogError> {
        if text.trim().is_empty() {
            return Err(CatalogError::Parse("empty catalog".into()));
        }
        let file: CatalogFile = toml::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))?;
        if file.devices.is_empty() {
            return Err(CatalogError::Parse("catalog declares no devices".into()));
        }
        file.reference_beam
            .validate()
            .map_err(|e| CatalogError::Invalid(format!("reference_beam: {e}")))?;
        Catalog::build(file)
    }

    fn build(file: CatalogFile) -> Result<Catalog, CatalogError> {
        let invalid = |m: String| Err(CatalogError::Invalid(m));
        let mut device_index = HashMap::new();
        let mut addresses: HashMap<(u8, u8), &str> = HashMap::new();
        let mut all_channels = HashSet::new();
        let mut setpoints = BTreeMap::new();

        for (i, d) in file.devices.iter().enumerate() {
            if device_index.insert(d.device_id.clone(), i).is_some() {
                return invalid(format!("duplicate device_id {}", d.device_id));
            }
            let CamacAddress { crate_no, slot } = d.camac_address;
            if !CRATE_RANGE.contains(&crate_no) || !SLOT_RANGE.contains(&slot) {
                return Err(CatalogError::AddressRange {
                    device: d.device_id.clone(),
                    crate_no,
                    slot,
                });
            }
            if let Some(first) = addresses.insert((crate_no, slot), &d.device_id) {
                return Err(CatalogError::DuplicateAddress {
                    first: first.to_string(),
                    second: d.device_id.clone(),
                    crate_no,
                    slot,
                });
            }
            if d.scaling_law != d.class.scaling_law() {
                return Err(CatalogError::LawMismatch {
                    device: d.device_id.clone(),
                    class: d.class,
                    expected: d.class.scaling_law(),
                    got: d.scaling_law,
                });
            }
            if !(d.slew_per_s.is_finite() && d.slew_per_s >= 0.0 && d.noise_sigma.is_finite() && d.noise_sigma >= 0.0) {
                return invalid(format!("{}: slew_per_s and noise_sigma must be finite and >= 0", d.device_id));
            }
            let prefix = format!("{}:", d.device_id);
            for ch in &d.channels {
                if !is_valid_name(ch) || !ch.starts_with(&prefix) {
                    return invalid(format!("{}: bad channel name {ch}", d.device_id));
                }
                if !all_channels.insert(ch.clone()) {
                    return invalid(format!("channel {ch} listed twice"));
                }
            }
            for (ch, lim) in &d.limits {
                if !d.channels.contains(ch) {
                    return invalid(format!("{}: limits for unowned channel {ch}", d.device_id));
                }
                if !(lim.min.is_finite() && lim.max.is_finite() && lim.min < lim.max) {
                    return Err(CatalogError::LimitOrder {
                        channel: ch.clone(),
                        min: lim.min,
                        max: lim.max,
                    });
                }
                let rb = format!("{ch}_rb");
                let law = if signal(ch) == "phase" { ScalingLaw::None } else { d.scaling_law };
                setpoints.insert(
                    ch.clone(),
                    SetpointInfo {
                        channel: ch.clone(),
                        device: i,
                        law,
                        limits: *lim,
                        integer: d.class == DeviceClass::StepperInsertion,
                        readback: d.channels.contains(&rb).then_some(rb),
                    },
                );
            }
        }

        let mut seen_presets = HashSet::new();
        for p in &file.presets {
            let Some(&i) = device_index.get(&p.device_id) else {
                return invalid(format!("preset for unknown device {}", p.device_id));
            };
            if file.devices[i].class != DeviceClass::StepperInsertion {
                return invalid(format!("preset on non-stepper device {}", p.device_id));
            }
            if !seen_presets.insert((p.device_id.clone(), p.preset_name.clone())) {
                return invalid(format!("duplicate preset {}/{}", p.device_id, p.preset_name));
            }
        }

        for (ch, info) in &setpoints {
            match file.golden_tune.get(ch) {
                Some(v) if !info.limits.contains(*v) => {
                    return invalid(format!("golden value {v} for {ch} outside its limits"));
                }
                None if info.law != ScalingLaw::None => {
                    return Err(CatalogError::GoldenTuneIncomplete(ch.clone()));
                }
                _ => {}
            }
        }
        if let Some(ch) = file.golden_tune.keys().find(|ch| !setpoints.contains_key(*ch)) {
            return invalid(format!("golden_tune names {ch}, which is not a setpoint"));
        }

        Ok(Catalog {
            reference_beam: file.reference_beam,
            devices: file.devices,
            presets: file.presets,
            golden_tune: file.golden_tune,
            setpoints,
            device_index,
        })
    }

    pub fn device(&self, id: &str) -> Option<&DeviceDescriptor> {
        self.device_index.get(id).map(|&i| &self.devices[i])
    }

    pub fn setpoint(&self, channel: &str) -> Option<&SetpointInfo> {
        self.setpoints.get(channel)
    }

    /// Setpoints sorted by channel name.
    pub fn setpoints(&self) -> impl Iterator<Item = &SetpointInfo> {
        self.setpoints.values()
    }

    /// The setpoints that enter the transmission model.
    pub fn scaled_setpoints(&self) -> impl Iterator<Item = &SetpointInfo> {
        self.setpoints.values().filter(|s| s.law != ScalingLaw::None)
    }

    pub fn presets_for(&self, device_id: &str) -> Vec<&StepperPreset> {
        self.presets.iter().filter(|p| p.device_id == device_id).collect()
    }

    pub fn summary(&self) -> CatalogSummary {
        let count = |c: DeviceClass| self.devices.iter().filter(|d| d.class == c).count();
        let mut target_lines: Vec<i64> = self.devices.iter().filter_map(DeviceDescriptor::target_line).collect();
        target_lines.sort_unstable();
        target_lines.dedup();
        CatalogSummary {
            devices: self.devices.len(),
            resonators: count(DeviceClass::Resonator),
            injectors: self.devices.iter().filter(|d| d.is_injector()).count(),
            beam_monitors: count(DeviceClass::BeamMonitor),
            target_lines,
            channels: self.devices.iter().map(|d| d.channels.len()).sum(),
            setpoints: self.setpoints.len(),
        }
    }

    /// Channel definitions for every device channel.
    pub fn channel_specs(&self, stale_after_ms: Option<u64>) -> Vec<ChannelSpec> {
        let mut out = Vec::new();
        for d in &self.devices {
            for ch in &d.channels {
                let sig = signal(ch);
                let units = signal_units(ch);
                let spec = if let Some(info) = self.setpoints.get(ch) {
                    let tag = if info.integer { ValueTag::Int } else { ValueTag::Float };
                    ChannelSpec::new(ch, tag, units, Role::Setpoint, true)
                } else {
                    let tag = if sig == "status" {
                        ValueTag::Enum(CRYO_STATUS.iter().map(|s| s.to_string()).collect())
                    } else if d.class == DeviceClass::StepperInsertion {
                        ValueTag::Int
                    } else {
                        ValueTag::Float
                    };
                    let critical = d.class == DeviceClass::BeamMonitor;
                    let mut spec = ChannelSpec::new(ch, tag, units, Role::Readback, critical);
                    if let Some(ms) = stale_after_ms {
                        spec = spec.stale_after(ms);
                    }
                    spec
                };
                out.push(spec);
            }
        }
        out
    }

    /// Golden value of `setpoint` carried over to `beam`.
    pub fn golden_for(&self, info: &SetpointInfo, factors: &crate::tune::ScaleFactorSet) -> Option<f64> {
        self.golden_tune.get(&info.channel).map(|g| g * factors.factor(info.law))
    }

    /// Setpoint value used when the channels are first created.
    pub fn initial_value(&self, info: &SetpointInfo) -> Value {
        let v = self.golden_tune.get(&info.channel).copied().unwrap_or(info.limits.min);
        if info.integer {
            Value::Int(v.round() as i64)
        } else {
            Value::Float(v)
        }
    }

    /// Creates every catalog channel in `db` and puts setpoints at their
    /// initial values.
    pub fn install(&self, db: &ChannelDb, stale_after_ms: Option<u64>) -> Result<(), CatalogError> {
        for spec in self.channel_specs(stale_after_ms) {
            db.create_channel(spec)?;
        }
        for info in self.setpoints.values() {
            let v = self.initial_value(info);
            db.write(&info.channel, v.clone())?;
            if let Some(rb) = &info.readback {
                db.write(rb, v)?;
            }
        }
        Ok(())
    }
}

/// Parses the catalog at `path` and creates its channels in `db`.
pub fn load_catalog(path: impl AsRef<Path>, db: &ChannelDb) -> Result<(Catalog, CatalogSummary), CatalogError> {
    let catalog = Catalog::load(path)?;
    catalog.install(db, None)?;
    let summary = catalog.summary();
    Ok((catalog, summary))
}
