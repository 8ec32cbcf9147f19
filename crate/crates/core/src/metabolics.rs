//! Muscle energetics after Umberger et al. (2003), with the lengthening
//! heat coefficient of Uchida et al. (2016) and per-muscle non-negative
//! totals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::muscle::{curves::active_force_length, MuscleSpec, MuscleState};

/// Aerobic scaling factor.
pub const AEROBIC_SCALE: f64 = 1.5;
/// Whole-body basal rate added to gross cost, W/kg.
pub const BASAL_RATE: f64 = 1.2;
/// Cap on the slow-twitch shortening heat rate, W/kg.
pub const MAX_SLOW_SHORTENING_HEAT: f64 = 100.0;
/// Ratio of fast- to slow-twitch maximum shortening velocity.
pub const FAST_SLOW_VMAX_RATIO: f64 = 2.5;
/// Lengthening heat coefficient relative to the slow-twitch shortening one.
pub const LENGTHENING_RATIO: f64 = 0.3;

#[derive(Debug, Error)]
pub enum MetabolicsError {
    #[error("metabolic cost of an empty trace is undefined")]
    EmptyTrace,
}

/// Heat and work rates of one muscle, W per kg of muscle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetabolicRates {
    pub activation_maintenance: f64,
    pub shortening_lengthening: f64,
    pub work: f64,
    /// Clamped at zero.
    pub total: f64,
    /// kg
    pub muscle_mass: f64,
}

impl MetabolicRates {
    pub fn unclamped_total(&self) -> f64 {
        self.activation_maintenance + self.shortening_lengthening + self.work
    }

    /// Total in watts.
    pub fn watts(&self) -> f64 {
        self.total * self.muscle_mass
    }
}

/// Energy liberation rate of one muscle.
pub fn muscle_energy_rate(state: &MuscleState, spec: &MuscleSpec) -> MetabolicRates {
    let ft = spec.fast_twitch_ratio;
    let u = state.excitation;
    let a = state.activation;
    let big_a = if u > a { u } else { 0.5 * (u + a) };
    let l = state.fiber_length;
    let f_iso = active_force_length(l);

    let mut h_am = (128.0 * ft + 25.0) * big_a.powf(0.6) * AEROBIC_SCALE;
    if l > 1.0 {
        h_am *= 0.4 + 0.6 * f_iso;
    }

    let vmax_ft = spec.max_contraction_velocity;
    let vmax_st = vmax_ft / FAST_SLOW_VMAX_RATIO;
    let alpha_s_st = 100.0 / vmax_st;
    let alpha_s_ft = 153.0 / vmax_ft;
    let alpha_l = LENGTHENING_RATIO * alpha_s_st;
    // optimal fiber lengths per second
    let v = state.fiber_velocity * spec.max_contraction_velocity;
    let mut h_sl = if v <= 0.0 {
        ((-alpha_s_st * v).min(MAX_SLOW_SHORTENING_HEAT) * (1.0 - ft) - alpha_s_ft * v * ft) * big_a * big_a * AEROBIC_SCALE
    } else {
        alpha_l * v * big_a * AEROBIC_SCALE
    };
    if l > 1.0 {
        h_sl *= f_iso;
    }

    let mass = spec.mass();
    let v_ms = state.fiber_velocity * spec.velocity_scale();
    let work = -state.active_force * v_ms / mass;

    MetabolicRates {
        activation_maintenance: h_am,
        shortening_lengthening: h_sl,
        work,
        total: (h_am + h_sl + work).max(0.0),
        muscle_mass: mass,
    }
}

/// Whole-body gross metabolic cost, W/kg: time average of the summed
/// muscle power plus [`BASAL_RATE`]. Each inner slice holds one sample's
/// per-muscle rates on a uniform time grid.
pub fn gross_metabolic_cost<S: AsRef<[MetabolicRates]>>(samples: &[S], model_mass: f64) -> Result<f64, MetabolicsError> {
    if samples.is_empty() {
        return Err(MetabolicsError::EmptyTrace);
    }
    let total: f64 = samples
        .iter()
        .map(|s| s.as_ref().iter().map(MetabolicRates::watts).sum::<f64>())
        .sum();
    Ok(total / samples.len() as f64 / model_mass + BASAL_RATE)
}
