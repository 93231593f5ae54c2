//! Relativistic ion kinematics and the per-law scale factors used to carry
//! an archived tune over to a different beam species.
//!
//! Constants: atomic mass unit u·c² = 931.494 MeV and
//! Bρ [T·m] = pc [MeV] / (299.792458 · q).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// u·c² in MeV.
pub const AMU_MEV: f64 = 931.494;
/// c in units that turn pc [MeV] per unit charge into T·m.
pub const RIGIDITY_MEV_PER_TM: f64 = 299.792458;
/// Machine velocity limit; restores above it are flagged, not refused.
pub const BETA_LIMIT: f64 = 0.2;
pub const MAX_CHARGE_STATE: i64 = 120;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeamError {
    #[error("mass must be a positive finite number of u, got {0}")]
    Mass(f64),
    #[error("charge state must be in 1..=120, got {0}")]
    Charge(i64),
    #[error("energy must be a positive finite MeV/u, got {0}")]
    Energy(f64),
}

/// Species triple that every scaling decision is derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamParameters {
    pub mass_amu: f64,
    pub charge_state: i64,
    pub energy_mev_u: f64,
}

impl BeamParameters {
    pub fn new(mass_amu: f64, charge_state: i64, energy_mev_u: f64) -> Result<Self, BeamError> {
        let beam = BeamParameters {
            mass_amu,
            charge_state,
            energy_mev_u,
        };
        beam.validate()?;
        Ok(beam)
    }

    pub fn validate(&self) -> Result<(), BeamError> {
        if !(self.mass_amu.is_finite() && self.mass_amu > 0.0) {
            return Err(BeamError::Mass(self.mass_amu));
        }
        if !(1..=MAX_CHARGE_STATE).contains(&self.charge_state) {
            return Err(BeamError::Charge(self.charge_state));
        }
        if !(self.energy_mev_u.is_finite() && self.energy_mev_u > 0.0) {
            return Err(BeamError::Energy(self.energy_mev_u));
        }
        Ok(())
    }

    pub fn kinematics(&self) -> Kinematics {
        kinematics(self)
    }

    /// Electric rigidity pβc/q in MV.
    pub fn electric_rigidity(&self) -> f64 {
        let k = self.kinematics();
        k.pc_total_mev * k.beta / self.charge_state as f64
    }

    /// Total energy gain per unit charge, m·E/q.
    pub fn energy_per_charge(&self) -> f64 {
        self.mass_amu * self.energy_mev_u / self.charge_state as f64
    }

    pub fn exceeds_beta_limit(&self) -> bool {
        self.kinematics().beta > BETA_LIMIT
    }
}

impl fmt::Display for BeamParameters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m={} u, q={}+, E={} MeV/u", self.mass_amu, self.charge_state, self.energy_mev_u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub gamma: f64,
    pub beta: f64,
    pub beta_gamma: f64,
    pub pc_total_mev: f64,
    pub rigidity_tm: f64,
}

pub fn kinematics(beam: &BeamParameters) -> Kinematics {
    let t = beam.energy_mev_u / AMU_MEV;
    let gamma = 1.0 + t;
    // γ²−1 factored as t(2+t) so low energies keep full precision.
    let beta_gamma = (t * (2.0 + t)).sqrt();
    let beta = beta_gamma / gamma;
    let pc_total_mev = beam.mass_amu * AMU_MEV * beta_gamma;
    let rigidity_tm = pc_total_mev / (RIGIDITY_MEV_PER_TM * beam.charge_state as f64);
    Kinematics {
        gamma,
        beta,
        beta_gamma,
        pc_total_mev,
        rigidity_tm,
    }
}

/// Kinetic energy per nucleon at which the ion reaches `beta`.
pub fn energy_at_beta(beta: f64) -> f64 {
    AMU_MEV * (1.0 / (1.0 - beta * beta).sqrt() - 1.0)
}

/// Which rule a setpoint follows when the beam species changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingLaw {
    /// Magnetic rigidity p/q.
    Magnetic,
    /// Electric rigidity pβc/q.
    Electrostatic,
    /// Energy gain per charge m·E/q.
    RfAmplitude,
    None,
}

impl ScalingLaw {
    pub const ALL: [ScalingLaw; 4] = [
        ScalingLaw::Magnetic,
        ScalingLaw::Electrostatic,
        ScalingLaw::RfAmplitude,
        ScalingLaw::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScalingLaw::Magnetic => "magnetic",
            ScalingLaw::Electrostatic => "electrostatic",
            ScalingLaw::RfAmplitude => "rf_amplitude",
            ScalingLaw::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ScalingLaw::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

impl fmt::Display for ScalingLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactorSet {
    pub magnetic: f64,
    pub electrostatic: f64,
    pub rf_amplitude: f64,
    pub none: f64,
}

impl ScaleFactorSet {
    pub fn identity() -> Self {
        ScaleFactorSet {
            magnetic: 1.0,
            electrostatic: 1.0,
            rf_amplitude: 1.0,
            none: 1.0,
        }
    }

    pub fn factor(&self, law: ScalingLaw) -> f64 {
        match law {
            ScalingLaw::Magnetic => self.magnetic,
            ScalingLaw::Electrostatic => self.electrostatic,
            ScalingLaw::RfAmplitude => self.rf_amplitude,
            ScalingLaw::None => self.none,
        }
    }
}

/// Multipliers that take setpoints tuned for `old` to setpoints for `new`.
pub fn scale_factors(old: &BeamParameters, new: &BeamParameters) -> ScaleFactorSet {
    let (ko, kn) = (old.kinematics(), new.kinematics());
    ScaleFactorSet {
        magnetic: kn.rigidity_tm / ko.rigidity_tm,
        electrostatic: new.electric_rigidity() / old.electric_rigidity(),
        rf_amplitude: new.energy_per_charge() / old.energy_per_charge(),
        none: 1.0,
    }
}
