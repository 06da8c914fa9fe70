//! Path loss and antenna gain.
//!
//! Only the deterministic power-law model ships. The gain toward a point at
//! distance `d` is `min(1, (d / d0)^-alpha)`, so it never exceeds unity and is
//! exactly 1 inside the reference distance.

use serde::{Deserialize, Serialize};

use crate::error::{MuseError, Result};
use crate::model::{AntennaPattern, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PropagationKind {
    #[default]
    PowerLaw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationModel {
    pub kind: PropagationKind,
    /// Path-loss exponent.
    pub alpha: f64,
    /// Reference distance in meters; gain is capped at 1 inside it.
    pub reference_distance: f64,
}

impl PropagationModel {
    pub fn power_law(alpha: f64) -> Self {
        Self {
            kind: PropagationKind::PowerLaw,
            alpha,
            reference_distance: 1.0,
        }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }

    pub fn gain(&self, d: f64) -> f64 {
        path_gain(self, d)
    }
}

impl Default for PropagationModel {
    fn default() -> Self {
        Self::power_law(3.5)
    }
}

/// Linear path gain in (0, 1].
pub fn path_gain(model: &PropagationModel, d: f64) -> f64 {
    match model.kind {
        PropagationKind::PowerLaw => {
            let r = d / model.reference_distance;
            if r <= 1.0 {
                1.0
            } else {
                r.powf(-model.alpha)
            }
        }
    }
}

/// Largest power a source at distance `d` from a receiver may emit so that
/// the receiver sees exactly `margin`. Non-decreasing in `d`.
pub fn inverse_path_gain_bound(model: &PropagationModel, margin: f64, d: f64) -> f64 {
    margin / path_gain(model, d)
}

/// Antenna gain of `pattern` mounted at `from`, toward `to`.
pub fn directional_gain(pattern: &AntennaPattern, from: Point, to: Point) -> Result<f64> {
    if from == to {
        return Err(MuseError::UndefinedBearing);
    }
    Ok(match *pattern {
        AntennaPattern::Omni => 1.0,
        AntennaPattern::Sector {
            boresight,
            beamwidth,
            main_gain,
            back_gain,
        } => {
            let bearing = (to.y - from.y).atan2(to.x - from.x);
            if angular_distance(bearing, boresight) <= beamwidth / 2.0 {
                main_gain
            } else {
                back_gain
            }
        }
    })
}

/// Like [`directional_gain`], but falls back to the pattern's peak gain when
/// the points coincide.
pub(crate) fn gain_or_peak(pattern: &AntennaPattern, from: Point, to: Point) -> f64 {
    directional_gain(pattern, from, to).unwrap_or_else(|_| pattern.peak_gain())
}

/// Absolute angle between two bearings, in [0, pi].
fn angular_distance(a: f64, b: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let d = (a - b).rem_euclid(tau);
    d.min(tau - d)
}
