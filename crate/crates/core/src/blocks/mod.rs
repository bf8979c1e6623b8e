//! Static input-output characteristics of the transistor stages.
//!
//! Every stage uses the same switch-level transistor: the base-emitter
//! junction is an ideal diode that conducts above `v_on`, the collector sinks
//! `beta` times the base current, and the collector-emitter voltage cannot
//! drop below `v_ce_sat`.

mod cascade;
mod diffamp;
mod hysteresis;
mod nonmonotone;
mod saturation;

pub use cascade::{
    loop_area, mirrored_hysteresis_sweep, CascadeParams, SweepDirection, SweepPoint, SweepResult,
};
pub use diffamp::{DiffAmpParams, PairOperatingPoint, PairSolution, TransistorMode};
pub use hysteresis::{HysteresisCorners, HysteresisParams};
pub use nonmonotone::{NonMonotoneParams, NonMonotoneExtrema};
pub use saturation::SaturationParams;

use crate::error::{Error, Result};

pub const THERMAL_VOLTAGE: f64 = 0.02585;
const REFERENCE_CURRENT: f64 = 1e-3;

/// Switch-level NPN model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransistorModel {
    pub beta: f64,
    pub v_on: f64,
    pub v_ce_sat: f64,
}

impl Default for TransistorModel {
    fn default() -> Self {
        Self { beta: 100.0, v_on: 0.6, v_ce_sat: 0.1 }
    }
}

impl TransistorModel {
    pub fn with_beta(beta: f64) -> Self {
        Self { beta, ..Self::default() }
    }

    /// Turn-on voltage taken as the base-emitter drop of an exponential
    /// junction with saturation current `i_s` at a collector current of 1 mA.
    pub fn from_saturation_current(beta: f64, i_s: f64) -> Self {
        let v_on = THERMAL_VOLTAGE * (REFERENCE_CURRENT / i_s).ln();
        Self { beta, v_on, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.v_ce_sat >= 0.0) || !(self.v_on >= 0.0) {
            return Err(Error::InvalidParameter("junction voltages must be non-negative".into()));
        }
        Ok(())
    }
}

/// Derived gains of the whole cascade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub g4: f64,
    pub g5: f64,
    pub g6: f64,
    pub g7: f64,
    pub vs1: f64,
    pub vs2: f64,
    pub vs3: f64,
    /// Normalization (Ω²) of the modulating differential amplifier.
    pub d: f64,
}

impl Gains {
    /// The non-monotone design condition `g1 g2 >= g3`.
    pub fn nonmonotone_condition(&self) -> bool {
        nonmonotone_condition(self.g1, self.g2, self.g3)
    }

    /// Positive feedback strong enough to fold the characteristic.
    pub fn hysteresis_condition(&self) -> bool {
        self.g7 >= 1.0
    }
}

pub fn nonmonotone_condition(g1: f64, g2: f64, g3: f64) -> bool {
    g1 * g2 >= g3
}

pub fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

/// Clamps a node voltage to the supply rails.
pub(crate) fn rail_clamp(v: f64, v_cc: f64) -> f64 {
    if v < 0.0 || v > v_cc {
        log::debug!("input {v} V outside [0, {v_cc}] V clamped to the rails");
    }
    v.clamp(0.0, v_cc)
}
