//! Tune archive and restore.
//!
//! A tune is every critical setpoint captured in one consistent snapshot,
//! stored with the beam it was taken for. Restoring multiplies each value
//! by the scale factor of its law, clamps it to the device limits and,
//! in commit mode, writes the result to the live channels.

mod kinematics;

use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kinematics::*;

use crate::archive::{ArchiveError, ArchiveStore, Provenance, TuneRow, TuneValue, TuneValueRow};
use crate::channel_db::{ChannelDb, Role, SnapshotFilter, Value, ValueTag};
use crate::sim::{Catalog, SharedBeam};

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("unknown tune {0}")]
    UnknownTune(i64),
    #[error("invalid beam: {0}")]
    InvalidBeam(#[from] BeamError),
    #[error("another commit-mode restore is in progress")]
    RestoreBusy,
    #[error("{} of {} setpoint writes failed", .0.failed_writes(), .0.entries.len())]
    WriteFailure(Box<RestoreReport>),
    #[error(transparent)]
    Storage(ArchiveError),
}

impl From<ArchiveError> for TuneError {
    fn from(e: ArchiveError) -> Self {
        match e {
            ArchiveError::UnknownTune(id) => TuneError::UnknownTune(id),
            other => TuneError::Storage(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestoreMode {
    DryRun,
    Commit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestoreEntry {
    pub channel: String,
    pub scaling_law: ScalingLaw,
    pub archived_value: f64,
    pub factor: f64,
    pub proposed_value: f64,
    pub clamped: bool,
    pub applied: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestoreReport {
    pub tune_id: i64,
    pub old_beam: BeamParameters,
    pub new_beam: BeamParameters,
    pub mode: RestoreMode,
    pub factors: ScaleFactorSet,
    pub entries: Vec<RestoreEntry>,
    pub beta_warning: bool,
}

impl RestoreReport {
    pub fn failed_writes(&self) -> usize {
        self.entries.iter().filter(|e| e.error.is_some()).count()
    }
}

pub struct TuneEngine {
    db: Arc<ChannelDb>,
    store: Arc<ArchiveStore>,
    catalog: Arc<Catalog>,
    beam: SharedBeam,
    commit_lock: Mutex<()>,
}

impl TuneEngine {
    pub fn new(db: Arc<ChannelDb>, store: Arc<ArchiveStore>, catalog: Arc<Catalog>, beam: SharedBeam) -> Self {
        TuneEngine {
            db,
            store,
            catalog,
            beam,
            commit_lock: Mutex::new(()),
        }
    }

    pub fn current_beam(&self) -> BeamParameters {
        *self.beam.read()
    }

    /// Captures every critical setpoint from one consistent snapshot and
    /// stores it as a tune for the current beam.
    pub fn archive_tune(&self, label: &str, provenance: Provenance) -> Result<i64, TuneError> {
        let snap = self.db.snapshot(SnapshotFilter::CriticalOnly);
        let beam = self.current_beam();
        let values: Vec<TuneValue> = snap
            .entries
            .into_iter()
            .filter(|(_, e)| e.role == Role::Setpoint)
            .filter_map(|(channel, e)| {
                let value = e.value.as_f64()?;
                let scaling_law = self
                    .catalog
                    .setpoint(&channel)
                    .map_or(ScalingLaw::None, |s| s.law);
                Some(TuneValue {
                    channel,
                    scaling_law,
                    value,
                })
            })
            .collect();
        Ok(self.store.persist_tune(label, provenance, &beam, &values)?)
    }

    pub fn load_tune(&self, id: i64) -> Result<(TuneRow, Vec<TuneValueRow>), TuneError> {
        Ok(self.store.load_tune(id)?)
    }

    /// Holds the commit lock: commit-mode restores fail with `RestoreBusy`
    /// until the guard is dropped. Dry runs are unaffected.
    pub fn pause_commits(&self) -> parking_lot::MutexGuard<'_, ()> {
        self.commit_lock.lock()
    }

    pub fn restore_tune(&self, tune_id: i64, new_beam: BeamParameters, mode: RestoreMode) -> Result<RestoreReport, TuneError> {
        new_beam.validate()?;
        let (row, values) = self.store.load_tune(tune_id)?;
        let old_beam = row.beam();
        let factors = scale_factors(&old_beam, &new_beam);

        let mut entries: Vec<RestoreEntry> = values
            .into_iter()
            .map(|v| {
                let factor = factors.factor(v.scaling_law);
                let mut proposed = v.value_float * factor;
                let mut clamped = false;
                if let Some(info) = self.catalog.setpoint(&v.channel) {
                    if !info.limits.contains(proposed) {
                        proposed = info.limits.clamp(proposed);
                        clamped = true;
                    }
                    if info.integer {
                        proposed = proposed.round();
                    }
                }
                RestoreEntry {
                    channel: v.channel,
                    scaling_law: v.scaling_law,
                    archived_value: v.value_float,
                    factor,
                    proposed_value: proposed,
                    clamped,
                    applied: false,
                    error: None,
                }
            })
            .collect();

        if mode == RestoreMode::Commit {
            let _guard = self.commit_lock.try_lock().ok_or(TuneError::RestoreBusy)?;
            for e in &mut entries {
                let value = match self.db.tag(&e.channel) {
                    Ok(ValueTag::Int) => Ok(Value::Int(e.proposed_value as i64)),
                    Ok(ValueTag::Float) => Ok(Value::Float(e.proposed_value)),
                    Ok(ValueTag::Enum(_)) => Err(format!("{} is an enum channel", e.channel)),
                    Err(err) => Err(err.to_string()),
                };
                match value.and_then(|v| self.db.write(&e.channel, v).map_err(|err| err.to_string())) {
                    Ok(_) => e.applied = true,
                    Err(msg) => e.error = Some(msg),
                }
            }
            *self.beam.write() = new_beam;
        }

        let report = RestoreReport {
            tune_id,
            old_beam,
            new_beam,
            mode,
            factors,
            entries,
            beta_warning: new_beam.exceeds_beta_limit(),
        };
        if report.failed_writes() > 0 {
            return Err(TuneError::WriteFailure(Box::new(report)));
        }
        Ok(report)
    }
}
