//! Normalized Hill-model characteristic curves.
//!
//! Lengths are normalized by the optimal fiber length, velocities by
//! `v_max · l_opt` (negative when shortening), forces by the maximum
//! isometric force, tendon strain by the slack length.

/// Width of the active force–length Gaussian.
pub const FL_WIDTH: f64 = 0.45;
/// Passive fiber strain at which the passive force reaches `F_max`.
pub const PASSIVE_STRAIN: f64 = 0.6;
/// Passive exponential shape factor.
pub const PASSIVE_SHAPE: f64 = 4.0;
/// Force–velocity curvature for shortening.
pub const FV_CURVATURE: f64 = 0.5;
/// Eccentric force asymptote.
pub const FV_ECCENTRIC_MAX: f64 = 1.8;
/// Tendon strain at `F_max`.
pub const TENDON_STRAIN_AT_FMAX: f64 = 0.049;
const TENDON_TOE_SHAPE: f64 = 3.0;
const TENDON_TOE_FORCE: f64 = 0.333;

/// Active force–length multiplier.
pub fn active_force_length(l: f64) -> f64 {
    (-(l - 1.0).powi(2) / FL_WIDTH).exp()
}

pub fn active_force_length_deriv(l: f64) -> f64 {
    -2.0 * (l - 1.0) / FL_WIDTH * active_force_length(l)
}

/// Passive fiber force. Zero below optimal length, C¹ at the knee.
pub fn passive_force_length(l: f64) -> f64 {
    if l <= 1.0 {
        return 0.0;
    }
    let x = PASSIVE_SHAPE * (l - 1.0) / PASSIVE_STRAIN;
    let norm = PASSIVE_SHAPE.exp() - 1.0 - PASSIVE_SHAPE;
    (x.exp() - 1.0 - x) / norm
}

pub fn passive_force_length_deriv(l: f64) -> f64 {
    if l <= 1.0 {
        return 0.0;
    }
    let x = PASSIVE_SHAPE * (l - 1.0) / PASSIVE_STRAIN;
    let norm = PASSIVE_SHAPE.exp() - 1.0 - PASSIVE_SHAPE;
    (x.exp() - 1.0) * PASSIVE_SHAPE / PASSIVE_STRAIN / norm
}

fn eccentric_offset() -> f64 {
    // chosen so the slope is continuous at zero velocity
    (FV_ECCENTRIC_MAX - 1.0) / (1.0 + 1.0 / FV_CURVATURE)
}

/// Force–velocity multiplier: Hill hyperbola when shortening, saturating
/// hyperbola when lengthening. Zero below `-1`.
pub fn force_velocity(v: f64) -> f64 {
    if v <= -1.0 {
        0.0
    } else if v <= 0.0 {
        (1.0 + v) / (1.0 - v / FV_CURVATURE)
    } else {
        1.0 + (FV_ECCENTRIC_MAX - 1.0) * v / (v + eccentric_offset())
    }
}

pub fn force_velocity_deriv(v: f64) -> f64 {
    if v <= -1.0 {
        0.0
    } else if v <= 0.0 {
        let d = 1.0 - v / FV_CURVATURE;
        (d + (1.0 + v) / FV_CURVATURE) / (d * d)
    } else {
        let c = eccentric_offset();
        (FV_ECCENTRIC_MAX - 1.0) * c / ((v + c) * (v + c))
    }
}

struct TendonToe {
    strain: f64,
    slope: f64,
}

fn tendon_toe() -> TendonToe {
    let e = TENDON_TOE_SHAPE.exp();
    let c = TENDON_TOE_FORCE * TENDON_TOE_SHAPE * e / (e - 1.0);
    let strain = c * TENDON_STRAIN_AT_FMAX / (1.0 - TENDON_TOE_FORCE + c);
    TendonToe {
        strain,
        slope: c / strain,
    }
}

/// Tendon force from strain: exponential toe region then linear, C¹,
/// equal to 1 at [`TENDON_STRAIN_AT_FMAX`].
pub fn tendon_force(strain: f64) -> f64 {
    if strain <= 0.0 {
        return 0.0;
    }
    let toe = tendon_toe();
    if strain <= toe.strain {
        TENDON_TOE_FORCE / (TENDON_TOE_SHAPE.exp() - 1.0) * ((TENDON_TOE_SHAPE * strain / toe.strain).exp() - 1.0)
    } else {
        TENDON_TOE_FORCE + toe.slope * (strain - toe.strain)
    }
}

pub fn tendon_force_deriv(strain: f64) -> f64 {
    if strain <= 0.0 {
        return 0.0;
    }
    let toe = tendon_toe();
    if strain <= toe.strain {
        TENDON_TOE_FORCE / (TENDON_TOE_SHAPE.exp() - 1.0) * TENDON_TOE_SHAPE / toe.strain
            * (TENDON_TOE_SHAPE * strain / toe.strain).exp()
    } else {
        toe.slope
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for &x in &[0.6, 0.9, 1.1, 1.3, 1.55] {
            assert!((fd(active_force_length, x) - active_force_length_deriv(x)).abs() < 1e-6);
            assert!((fd(passive_force_length, x) - passive_force_length_deriv(x)).abs() < 1e-5);
        }
        for &v in &[-0.9, -0.5, -0.1, 0.1, 0.5, 2.0] {
            assert!((fd(force_velocity, v) - force_velocity_deriv(v)).abs() < 1e-6, "{v}");
        }
        for &e in &[0.005, 0.02, 0.03, 0.06] {
            assert!((fd(tendon_force, e) - tendon_force_deriv(e)).abs() < 1e-4 * tendon_force_deriv(e));
        }
    }

    #[test]
    fn curves_are_c1_at_their_joins() {
        let h = 1e-9;
        assert!(passive_force_length_deriv(1.0 + h).abs() < 1e-6);
        assert!((force_velocity_deriv(-h) - force_velocity_deriv(h)).abs() < 1e-6);
        let toe = tendon_toe();
        assert!((tendon_force(toe.strain - h) - tendon_force(toe.strain + h)).abs() < 1e-6);
        assert!((tendon_force_deriv(toe.strain - h) - tendon_force_deriv(toe.strain + h)).abs() < 1e-4);
    }

    #[test]
    fn anchor_values() {
        assert_eq!(active_force_length(1.0), 1.0);
        assert_eq!(force_velocity(0.0), 1.0);
        assert!((passive_force_length(1.0 + PASSIVE_STRAIN) - 1.0).abs() < 1e-12);
        assert!((tendon_force(TENDON_STRAIN_AT_FMAX) - 1.0).abs() < 1e-12);
        assert!((force_velocity(-0.5) - 0.25).abs() < 1e-12);
        assert!(force_velocity(50.0) < FV_ECCENTRIC_MAX);
    }
}
