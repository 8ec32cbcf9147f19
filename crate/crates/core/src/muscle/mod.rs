//! Hill-type muscle–tendon units.
//!
//! Each unit has an elastic tendon in series with a pennated contractile
//! fiber (constant-thickness pennation). Fiber length is advanced by a
//! backward-Euler solve of the fiber–tendon force equilibrium, which stays
//! stable for stiff tendons at the physics step.

pub mod curves;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{JOINT_NAMES, N_JOINTS};
use curves::{active_force_length, force_velocity, passive_force_length, tendon_force};

/// Fiber damping coefficient (normalized force per normalized velocity).
pub const FIBER_DAMPING: f64 = 0.1;
/// Specific tension, Pa.
pub const SPECIFIC_TENSION: f64 = 0.25e6;
/// Muscle tissue density, kg/m³.
pub const MUSCLE_DENSITY: f64 = 1059.7;
/// Shortest admissible normalized fiber length.
const MIN_FIBER_LENGTH: f64 = 0.1;

#[derive(Debug, Error)]
pub enum MuscleError {
    #[error("muscle configuration parse error: {0}")]
    Parse(String),
    #[error("invalid muscle '{name}': {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("unknown muscle '{0}'")]
    UnknownMuscle(String),
    #[error("muscle '{name}': MTU length {length:.4} m is below half the tendon slack length")]
    DegenerateGeometry { name: String, length: f64 },
    #[error("muscle '{0}': fiber equilibrium did not converge")]
    NonConvergence(String),
}

fn default_vmax() -> f64 {
    10.0
}
fn default_tau_act() -> f64 {
    0.01
}
fn default_tau_deact() -> f64 {
    0.04
}

/// Moment arm as a polynomial in joint angle, `r(θ) = Σ cₖ θᵏ` (m).
/// Positive arms produce flexion (dorsiflexion at the ankle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentArm {
    pub joint: String,
    pub coefficients: Vec<f64>,
    /// Angle at which the fiber sits at optimal length with a slack tendon.
    #[serde(default)]
    pub reference_angle: f64,
    #[serde(skip)]
    joint_index: usize,
}

impl MomentArm {
    pub fn new(joint: &str, coefficients: Vec<f64>, reference_angle: f64) -> Self {
        Self {
            joint: joint.to_string(),
            coefficients,
            reference_angle,
            joint_index: JOINT_NAMES.iter().position(|j| *j == joint).unwrap_or(usize::MAX),
        }
    }

    pub fn joint_index(&self) -> usize {
        self.joint_index
    }

    pub fn at(&self, angle: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * angle + c)
    }

    /// `∫ r dθ` from the reference angle.
    fn integral(&self, angle: f64) -> f64 {
        let prim = |x: f64| {
            self.coefficients
                .iter()
                .enumerate()
                .map(|(k, c)| c * x.powi(k as i32 + 1) / (k as f64 + 1.0))
                .sum::<f64>()
        };
        prim(angle) - prim(self.reference_angle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuscleSpec {
    pub name: String,
    /// N
    pub max_isometric_force: f64,
    /// m
    pub optimal_fiber_length: f64,
    /// m
    pub tendon_slack_length: f64,
    /// Pennation at optimal fiber length, rad.
    #[serde(default)]
    pub pennation_angle: f64,
    /// Optimal fiber lengths per second.
    #[serde(default = "default_vmax")]
    pub max_contraction_velocity: f64,
    /// s
    #[serde(default = "default_tau_act")]
    pub activation_time: f64,
    /// s
    #[serde(default = "default_tau_deact")]
    pub deactivation_time: f64,
    pub fast_twitch_ratio: f64,
    /// Literature source of the fiber-type ratio.
    #[serde(default)]
    pub fast_twitch_source: String,
    #[serde(default)]
    pub rigid_tendon: bool,
    pub moment_arms: Vec<MomentArm>,
}

impl MuscleSpec {
    pub fn validate(&self) -> Result<(), MuscleError> {
        let bad = |reason: &str| {
            Err(MuscleError::InvalidSpec {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        let positive = [
            self.max_isometric_force,
            self.optimal_fiber_length,
            self.tendon_slack_length,
            self.max_contraction_velocity,
            self.activation_time,
            self.deactivation_time,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("forces, lengths, velocities and time constants must be > 0");
        }
        if !(0.0..=1.0).contains(&self.fast_twitch_ratio) {
            return bad("fast-twitch ratio must lie in [0, 1]");
        }
        if self.deactivation_time < self.activation_time {
            return bad("deactivation time constant must be >= activation time constant");
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.pennation_angle) {
            return bad("pennation angle must lie in [0, π/2)");
        }
        if self.moment_arms.is_empty() {
            return bad("muscle spans no joint");
        }
        for arm in &self.moment_arms {
            if arm.joint_index >= N_JOINTS {
                return bad(&format!("unknown joint '{}'", arm.joint));
            }
            if arm.coefficients.is_empty() {
                return bad("moment arm has no coefficients");
            }
        }
        Ok(())
    }

    /// Muscle mass from force capacity and fiber length, kg.
    pub fn mass(&self) -> f64 {
        self.max_isometric_force / SPECIFIC_TENSION * self.optimal_fiber_length * MUSCLE_DENSITY
    }

    /// MTU length with every spanned joint at its reference angle.
    pub fn reference_length(&self) -> f64 {
        self.tendon_slack_length + self.optimal_fiber_length * self.pennation_angle.cos()
    }

    fn thickness(&self) -> f64 {
        self.optimal_fiber_length * self.pennation_angle.sin()
    }

    /// Fiber velocity normalizer, m/s.
    pub fn velocity_scale(&self) -> f64 {
        self.max_contraction_velocity * self.optimal_fiber_length
    }
}

/// Runtime state of one muscle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuscleState {
    pub excitation: f64,
    pub activation: f64,
    /// Fiber length / optimal fiber length.
    pub fiber_length: f64,
    /// Fiber velocity / (v_max · l_opt); negative when shortening.
    pub fiber_velocity: f64,
    /// N
    pub tendon_force: f64,
    /// Contractile (active) fiber force along the fiber, N.
    pub active_force: f64,
}

impl MuscleState {
    pub fn resting(activation: f64) -> Self {
        Self {
            excitation: activation,
            activation,
            fiber_length: 1.0,
            fiber_velocity: 0.0,
            tendon_force: 0.0,
            active_force: 0.0,
        }
    }
}

/// One explicit Euler step of first-order activation dynamics.
pub fn activation_step(a: f64, e: f64, dt: f64, spec: &MuscleSpec) -> f64 {
    let tau = if e >= a {
        spec.activation_time
    } else {
        spec.deactivation_time
    };
    (a + dt * (e - a) / tau).clamp(0.0, 1.0)
}

struct FiberForce {
    /// Along the fiber, normalized, clamped ≥ 0.
    total: f64,
    active: f64,
}

fn fiber_force(a: f64, l: f64, v: f64) -> FiberForce {
    let active = a * active_force_length(l) * force_velocity(v);
    let total = (active + passive_force_length(l) + FIBER_DAMPING * v).max(0.0);
    FiberForce { total, active }
}

/// Solves the fiber–tendon equilibrium for an MTU length.
///
/// With `dt = Some(h)` the fiber velocity is the backward difference from
/// `state.fiber_length`; with `None` the fiber is isometric (static
/// equilibrium, used at reset). Returns the tendon force and the updated
/// state; excitation is copied through and `a` becomes the state's activation.
pub fn mtu_force(
    state: &MuscleState,
    mtu_length: f64,
    mtu_velocity: f64,
    a: f64,
    dt: Option<f64>,
    spec: &MuscleSpec,
) -> Result<(f64, MuscleState), MuscleError> {
    let lopt = spec.optimal_fiber_length;
    let ls = spec.tendon_slack_length;
    let fmax = spec.max_isometric_force;
    if !(mtu_length > 0.5 * ls) {
        return Err(MuscleError::DegenerateGeometry {
            name: spec.name.clone(),
            length: mtu_length,
        });
    }
    let h = spec.thickness();
    let fiber_of = |x: f64| (x * x + h * h).sqrt();
    let mut next = *state;
    next.activation = a;

    if spec.rigid_tendon {
        let x = (mtu_length - ls).max(MIN_FIBER_LENGTH * lopt);
        let lm = fiber_of(x);
        let cos = x / lm;
        let v = mtu_velocity * cos / spec.velocity_scale();
        let f = fiber_force(a, lm / lopt, v);
        next.fiber_length = lm / lopt;
        next.fiber_velocity = v;
        next.active_force = f.active * fmax;
        next.tendon_force = f.total * cos * fmax;
        return Ok((next.tendon_force, next));
    }

    let prev_len = state.fiber_length * lopt;
    let velocity = |lm: f64| match dt {
        Some(step) => (lm - prev_len) / (step * spec.velocity_scale()),
        None => 0.0,
    };
    // g(x) = fiber force projected on the tendon minus tendon force
    let residual = |x: f64| {
        let lm = fiber_of(x);
        let f = fiber_force(a, lm / lopt, velocity(lm));
        f.total * (x / lm) - tendon_force((mtu_length - x - ls) / ls)
    };

    let x_lo0 = (MIN_FIBER_LENGTH * lopt * MIN_FIBER_LENGTH * lopt - h * h).max(0.0).sqrt().max(1e-6 * lopt);
    let x_hi0 = mtu_length - ls;
    let x = if x_hi0 <= x_lo0 {
        // slack MTU: tendon carries no load
        x_lo0
    } else {
        let (mut lo, mut hi) = (x_lo0, x_hi0);
        let (mut g_lo, mut g_hi) = (residual(lo), residual(hi));
        if g_lo >= 0.0 {
            lo
        } else if g_hi <= 0.0 {
            hi
        } else {
            let tol_x = 1e-13 * lopt;
            let tol_f = 1e-10;
            let mut side = 0i8;
            let mut root = None;
            for it in 0..200 {
                let mut m = if it % 4 == 3 {
                    0.5 * (lo + hi)
                } else {
                    (lo * g_hi - hi * g_lo) / (g_hi - g_lo)
                };
                if !(m > lo && m < hi) {
                    m = 0.5 * (lo + hi);
                }
                let g = residual(m);
                if g.abs() < tol_f || hi - lo < tol_x {
                    root = Some(m);
                    break;
                }
                if g < 0.0 {
                    lo = m;
                    g_lo = g;
                    if side == -1 {
                        g_hi *= 0.5;
                    }
                    side = -1;
                } else {
                    hi = m;
                    g_hi = g;
                    if side == 1 {
                        g_lo *= 0.5;
                    }
                    side = 1;
                }
            }
            root.ok_or_else(|| MuscleError::NonConvergence(spec.name.clone()))?
        }
    };

    let lm = fiber_of(x);
    let v = velocity(lm);
    let f = fiber_force(a, lm / lopt, v);
    next.fiber_length = lm / lopt;
    next.fiber_velocity = v;
    next.active_force = f.active * fmax;
    next.tendon_force = tendon_force((mtu_length - x - ls) / ls) * fmax;
    Ok((next.tendon_force, next))
}

#[derive(Debug, Clone, Deserialize)]
struct MuscleFile {
    #[serde(default)]
    bilateral: bool,
    muscles: Vec<MuscleSpec>,
}

/// The full muscle set of the walker.
#[derive(Debug, Clone, PartialEq)]
pub struct MuscleSet {
    specs: Vec<MuscleSpec>,
}

impl MuscleSet {
    pub fn new(mut specs: Vec<MuscleSpec>) -> Result<Self, MuscleError> {
        for s in &mut specs {
            for arm in &mut s.moment_arms {
                arm.joint_index = JOINT_NAMES.iter().position(|j| *j == arm.joint).unwrap_or(usize::MAX);
            }
            s.validate()?;
        }
        let mut names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(MuscleError::InvalidSpec {
                name: w[0].to_string(),
                reason: "duplicate name".into(),
            });
        }
        Ok(Self { specs })
    }

    /// Parses a muscle file. With `bilateral = true` each entry is a
    /// template instantiated for the left then the right leg: names and
    /// moment-arm joints receive `_l` / `_r` suffixes.
    pub fn from_toml_str(src: &str) -> Result<Self, MuscleError> {
        let file: MuscleFile = toml::from_str(src).map_err(|e| MuscleError::Parse(e.to_string()))?;
        if !file.bilateral {
            return Self::new(file.muscles);
        }
        let mut specs = Vec::with_capacity(file.muscles.len() * 2);
        for suffix in ["_l", "_r"] {
            for m in &file.muscles {
                let mut s = m.clone();
                s.name = format!("{}{suffix}", m.name);
                for arm in &mut s.moment_arms {
                    arm.joint = format!("{}{suffix}", arm.joint);
                }
                specs.push(s);
            }
        }
        Self::new(specs)
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn specs(&self) -> &[MuscleSpec] {
        &self.specs
    }

    pub fn spec(&self, i: usize) -> &MuscleSpec {
        &self.specs[i]
    }

    pub fn names(&self) -> Vec<&str> {
        self.specs.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, MuscleError> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| MuscleError::UnknownMuscle(name.to_string()))
    }

    pub fn masses(&self) -> Vec<f64> {
        self.specs.iter().map(MuscleSpec::mass).collect()
    }

    /// MTU length and lengthening velocity from the six joint angles/rates.
    pub fn mtu_kinematics(&self, i: usize, angles: &[f64], rates: &[f64]) -> (f64, f64) {
        let s = &self.specs[i];
        let mut len = s.reference_length();
        let mut vel = 0.0;
        for arm in &s.moment_arms {
            let j = arm.joint_index;
            len -= arm.integral(angles[j]);
            vel -= arm.at(angles[j]) * rates[j];
        }
        (len, vel)
    }

    /// Net muscle moment at each joint, N·m.
    pub fn joint_moments(&self, states: &[MuscleState], angles: &[f64]) -> [f64; N_JOINTS] {
        let mut out = [0.0; N_JOINTS];
        for (s, st) in self.specs.iter().zip(states) {
            for arm in &s.moment_arms {
                out[arm.joint_index] += st.tendon_force * arm.at(angles[arm.joint_index]);
            }
        }
        out
    }

    /// Static fiber equilibrium at the given pose and activation.
    pub fn equilibrium_states(&self, angles: &[f64], activation: f64) -> Result<Vec<MuscleState>, MuscleError> {
        let zeros = [0.0; N_JOINTS];
        (0..self.len())
            .map(|i| {
                let (l, _) = self.mtu_kinematics(i, angles, &zeros);
                let init = MuscleState::resting(activation);
                mtu_force(&init, l, 0.0, activation, None, &self.specs[i]).map(|(_, s)| s)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_muscles;

    fn simple(rigid: bool) -> MuscleSpec {
        MuscleSpec {
            name: "m".into(),
            max_isometric_force: 1000.0,
            optimal_fiber_length: 0.1,
            tendon_slack_length: 0.2,
            pennation_angle: 0.0,
            max_contraction_velocity: 10.0,
            activation_time: 0.01,
            deactivation_time: 0.04,
            fast_twitch_ratio: 0.5,
            fast_twitch_source: String::new(),
            rigid_tendon: rigid,
            moment_arms: vec![MomentArm::new("hip_l", vec![0.05], 0.0)],
        }
    }

    #[test]
    fn activation_examples() {
        let s = simple(false);
        assert_eq!(activation_step(0.3, 0.3, 0.005, &s), 0.3);
        assert!((activation_step(0.0, 1.0, 0.005, &s) - 0.5).abs() < 1e-15);
        assert!((activation_step(1.0, 0.0, 0.005, &s) - 0.875).abs() < 1e-15);
    }

    #[test]
    fn rigid_isometric_force_is_fmax() {
        let s = simple(true);
        let st = MuscleState::resting(1.0);
        let (f, _) = mtu_force(&st, 0.3, 0.0, 1.0, Some(0.005), &s).unwrap();
        assert!((f / 1000.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn inactive_short_fiber_is_passive_only() {
        let s = simple(false);
        let st = MuscleState::resting(0.0);
        let (f, next) = mtu_force(&st, 0.28, 0.0, 0.0, None, &s).unwrap();
        assert!(next.fiber_length < 1.0);
        assert_eq!(f, 0.0);
    }

    #[test]
    fn elastic_equilibrium_balances_forces() {
        let mut s = simple(false);
        s.pennation_angle = 0.3;
        let st = MuscleState::resting(0.7);
        let (f, next) = mtu_force(&st, 0.305, 0.0, 0.7, None, &s).unwrap();
        let lm = next.fiber_length * 0.1;
        let h = 0.1 * 0.3f64.sin();
        let cos = (lm * lm - h * h).sqrt() / lm;
        let fiber = 0.7 * active_force_length(next.fiber_length) + passive_force_length(next.fiber_length);
        assert!((fiber * cos * 1000.0 - f).abs() < 1e-5, "{} vs {f}", fiber * cos * 1000.0);
        assert!(f > 0.0);
    }

    #[test]
    fn degenerate_geometry_is_rejected() {
        let s = simple(false);
        assert!(matches!(
            mtu_force(&MuscleState::resting(0.1), 0.05, 0.0, 0.1, None, &s),
            Err(MuscleError::DegenerateGeometry { .. })
        ));
    }

    #[test]
    fn single_muscle_moment() {
        let mut s = simple(false);
        s.moment_arms = vec![MomentArm::new("knee_r", vec![0.05], 0.0)];
        let set = MuscleSet::new(vec![s]).unwrap();
        let st = MuscleState {
            tendon_force: 100.0,
            ..MuscleState::resting(0.0)
        };
        let m = set.joint_moments(&[st], &[0.0; 6]);
        assert!((m[4] - 5.0).abs() < 1e-12);
        assert_eq!(m.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn default_set_has_eighteen_muscles() {
        let set = default_muscles();
        assert_eq!(set.len(), 18);
        assert_eq!(set.index_of("soleus_l").unwrap(), 7);
        assert!(set.index_of("soleus_r").unwrap() >= 9);
        assert!(matches!(set.index_of("deltoid"), Err(MuscleError::UnknownMuscle(_))));
        let st = set.equilibrium_states(&[0.1, 0.2, 0.0, -0.1, 0.1, 0.05], 0.05).unwrap();
        for s in &st {
            assert!(s.fiber_length > 0.3 && s.fiber_length < 1.8, "{s:?}");
        }
    }

    #[test]
    fn velocity_is_consistent_with_length() {
        let set = default_muscles();
        let q = [0.3, 0.5, -0.1, -0.2, 0.2, 0.1];
        let qd = [1.0, -2.0, 0.5, 0.3, 1.5, -1.0];
        let h = 1e-6;
        for i in 0..set.len() {
            let qp: Vec<f64> = q.iter().zip(&qd).map(|(a, b)| a + h * b).collect();
            let qm: Vec<f64> = q.iter().zip(&qd).map(|(a, b)| a - h * b).collect();
            let fd = (set.mtu_kinematics(i, &qp, &qd).0 - set.mtu_kinematics(i, &qm, &qd).0) / (2.0 * h);
            let v = set.mtu_kinematics(i, &q, &qd).1;
            assert!((fd - v).abs() < 1e-8);
        }
    }
}
