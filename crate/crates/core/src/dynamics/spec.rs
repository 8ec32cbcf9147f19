use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::contact::ContactMaterial;
use super::DynamicsError;
use crate::layout::{parse_joint, JointKind, Side};

fn default_gravity() -> f64 {
    9.81
}

fn default_sign() -> f64 {
    1.0
}

/// Rigid segment of the planar skeleton. Offsets are in the segment frame,
/// which coincides with the world frame when every angle is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub name: String,
    /// kg
    pub mass: f64,
    /// Sagittal moment of inertia about the center of mass, kg·m².
    pub inertia: f64,
    /// m
    pub length: f64,
    /// Center of mass relative to the segment origin, m.
    pub com: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub parent: String,
    pub child: String,
    /// Child origin in the parent frame, m.
    pub anchor: [f64; 2],
    /// +1 when a positive joint angle rotates the child counter-clockwise.
    #[serde(default = "default_sign")]
    pub sign: f64,
    /// rad
    pub lower: f64,
    /// rad
    pub upper: f64,
    /// N·m/rad
    pub limit_stiffness: f64,
    /// N·m·s/rad
    pub limit_damping: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactSphereSpec {
    pub segment: String,
    pub offset: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSpec {
    pub name: String,
    pub segment: String,
    pub offset: [f64; 2],
}

/// Planar skeleton description, loaded from TOML (SI units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSpec {
    pub name: String,
    /// Declared total mass; must equal the sum of segment masses.
    pub total_mass: f64,
    pub root: String,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    pub segments: Vec<SegmentSpec>,
    pub joints: Vec<JointSpec>,
    #[serde(default)]
    pub contacts: Vec<ContactSphereSpec>,
    #[serde(default)]
    pub landmarks: Vec<LandmarkSpec>,
    #[serde(default)]
    pub contact_material: ContactMaterial,
}

impl SkeletonSpec {
    pub fn from_toml_str(src: &str) -> Result<Self, DynamicsError> {
        let spec: SkeletonSpec = toml::from_str(src).map_err(|e| DynamicsError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn segment(&self, name: &str) -> Option<&SegmentSpec> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn segment_mass_sum(&self) -> f64 {
        self.segments.iter().map(|s| s.mass).sum()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let invalid = |msg: String| Err(DynamicsError::InvalidSpec(msg));
        if self.segments.is_empty() {
            return invalid("skeleton has no segments".into());
        }
        let mut names = HashSet::new();
        for s in &self.segments {
            if !names.insert(s.name.as_str()) {
                return invalid(format!("duplicate segment '{}'", s.name));
            }
            if !(s.mass > 0.0 && s.mass.is_finite()) {
                return invalid(format!("segment '{}' mass must be > 0", s.name));
            }
            if !(s.inertia > 0.0 && s.inertia.is_finite()) {
                return invalid(format!("segment '{}' inertia must be > 0", s.name));
            }
            if !(s.length > 0.0) {
                return invalid(format!("segment '{}' length must be > 0", s.name));
            }
        }
        let sum = self.segment_mass_sum();
        if ((sum - self.total_mass) / self.total_mass).abs() > 1e-9 {
            return invalid(format!(
                "total_mass {} does not match segment sum {}",
                self.total_mass, sum
            ));
        }
        if !names.contains(self.root.as_str()) {
            return invalid(format!("root segment '{}' not found", self.root));
        }

        // Tree check: each non-root segment is the child of exactly one joint,
        // and every segment is reachable from the root.
        let mut parent_of: HashMap<&str, &str> = HashMap::new();
        let mut joint_names = HashSet::new();
        for j in &self.joints {
            if !joint_names.insert(j.name.as_str()) {
                return invalid(format!("duplicate joint '{}'", j.name));
            }
            if !(j.lower < j.upper) {
                return invalid(format!("joint '{}' lower limit must be below upper", j.name));
            }
            if j.sign.abs() != 1.0 {
                return invalid(format!("joint '{}' sign must be +1 or -1", j.name));
            }
            if j.limit_stiffness < 0.0 || j.limit_damping < 0.0 {
                return invalid(format!("joint '{}' limit parameters must be >= 0", j.name));
            }
            for seg in [&j.parent, &j.child] {
                if !names.contains(seg.as_str()) {
                    return invalid(format!("joint '{}' references unknown segment '{seg}'", j.name));
                }
            }
            if j.child == self.root {
                return invalid(format!("joint '{}' uses the root as child", j.name));
            }
            if parent_of.insert(j.child.as_str(), j.parent.as_str()).is_some() {
                return invalid(format!("segment '{}' has more than one parent joint", j.child));
            }
        }
        for s in &self.segments {
            let mut cur = s.name.as_str();
            let mut hops = 0;
            while cur != self.root {
                match parent_of.get(cur) {
                    Some(p) => cur = p,
                    None => return invalid(format!("segment '{}' is not connected to the root", s.name)),
                }
                hops += 1;
                if hops > self.segments.len() {
                    return invalid(format!("kinematic loop through segment '{}'", s.name));
                }
            }
        }
        for c in &self.contacts {
            if !names.contains(c.segment.as_str()) {
                return invalid(format!("contact sphere on unknown segment '{}'", c.segment));
            }
            if !(c.radius > 0.0) {
                return invalid("contact sphere radius must be > 0".into());
            }
        }
        for l in &self.landmarks {
            if !names.contains(l.segment.as_str()) {
                return invalid(format!("landmark '{}' on unknown segment '{}'", l.name, l.segment));
            }
        }
        self.contact_material.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Hip,
    Ankle,
    #[default]
    None,
}

impl DeviceKind {
    pub fn name(self) -> &'static str {
        match self {
            DeviceKind::Hip => "hip",
            DeviceKind::Ankle => "ankle",
            DeviceKind::None => "none",
        }
    }
}

fn default_torque_per_kg() -> f64 {
    1.0
}

/// Exoskeleton hardware: added segment masses and ideal torque motors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExoDeviceSpec {
    pub kind: DeviceKind,
    /// Added mass per skeleton segment, kg.
    #[serde(default)]
    pub added_mass: BTreeMap<String, f64>,
    /// Optional declared total, checked against the per-segment sum.
    #[serde(default)]
    pub total_mass: Option<f64>,
    #[serde(default)]
    pub assisted_joints: Vec<String>,
    /// Torque bound per kg of model mass, used when `torque_max` has no entry.
    #[serde(default = "default_torque_per_kg")]
    pub torque_max_per_kg: f64,
    /// Explicit torque bounds per joint, N·m.
    #[serde(default)]
    pub torque_max: BTreeMap<String, f64>,
    /// First-order output filter cutoff, Hz.
    #[serde(default)]
    pub filter_cutoff: f64,
}

impl Default for ExoDeviceSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl ExoDeviceSpec {
    pub fn none() -> Self {
        Self {
            kind: DeviceKind::None,
            added_mass: BTreeMap::new(),
            total_mass: None,
            assisted_joints: Vec::new(),
            torque_max_per_kg: default_torque_per_kg(),
            torque_max: BTreeMap::new(),
            filter_cutoff: 0.0,
        }
    }

    pub fn from_toml_str(src: &str) -> Result<Self, DynamicsError> {
        let spec: ExoDeviceSpec = toml::from_str(src).map_err(|e| DynamicsError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn added_mass_total(&self) -> f64 {
        self.added_mass.values().sum()
    }

    pub fn is_active(&self) -> bool {
        self.kind != DeviceKind::None && !self.assisted_joints.is_empty()
    }

    /// Joints assisted by this device, as `(kind, side)` pairs.
    pub fn assisted(&self) -> Vec<(JointKind, Side)> {
        self.assisted_joints.iter().filter_map(|n| parse_joint(n)).collect()
    }

    /// Torque bound for one joint given the model mass.
    pub fn torque_max_for(&self, joint: &str, model_mass: f64) -> f64 {
        self.torque_max
            .get(joint)
            .copied()
            .unwrap_or(self.torque_max_per_kg * model_mass)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let invalid = |msg: String| Err(DynamicsError::InvalidSpec(msg));
        for (seg, m) in &self.added_mass {
            if !(*m >= 0.0 && m.is_finite()) {
                return invalid(format!("device mass on '{seg}' must be >= 0"));
            }
        }
        if let Some(total) = self.total_mass {
            if (total - self.added_mass_total()).abs() > 1e-9 {
                return invalid(format!(
                    "device total {total} kg does not match per-segment sum {}",
                    self.added_mass_total()
                ));
            }
        }
        for j in &self.assisted_joints {
            if parse_joint(j).is_none() {
                return invalid(format!("assisted joint '{j}' is not a hip, knee or ankle"));
            }
        }
        if self.kind != DeviceKind::None && self.assisted_joints.is_empty() {
            return invalid(format!("{} device assists no joints", self.kind.name()));
        }
        if !(self.torque_max_per_kg > 0.0) {
            return invalid("torque_max_per_kg must be > 0".into());
        }
        for (j, t) in &self.torque_max {
            if !(*t > 0.0) {
                return invalid(format!("torque_max for '{j}' must be > 0"));
            }
        }
        if self.is_active() && !(self.filter_cutoff > 0.0) {
            return invalid("active device needs a positive filter_cutoff".into());
        }
        Ok(())
    }
}
