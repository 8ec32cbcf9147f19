//! Fixed channel layout of the planar walker.
//!
//! Generalized coordinates are `[root_x, root_y, pelvis_tilt, hip_l, knee_l,
//! ankle_l, hip_r, knee_r, ankle_r]`. Sign conventions: flexion positive at hip
//! and knee, dorsiflexion positive at the ankle.

use serde::{Deserialize, Serialize};

pub const N_DOF: usize = 9;
pub const N_JOINTS: usize = 6;
/// Root pitch plus the six internal joints.
pub const N_ANGLES: usize = 7;
pub const ROOT_DOFS: usize = 3;

pub const DOF_NAMES: [&str; N_DOF] = [
    "root_x",
    "root_y",
    "pelvis_tilt",
    "hip_l",
    "knee_l",
    "ankle_l",
    "hip_r",
    "knee_r",
    "ankle_r",
];

pub const JOINT_NAMES: [&str; N_JOINTS] = ["hip_l", "knee_l", "ankle_l", "hip_r", "knee_r", "ankle_r"];

/// End-effector landmarks in the order used by the reward and the clip format.
pub const LANDMARK_NAMES: [&str; 3] = ["foot_l", "foot_r", "head"];

/// Contact groups (one ground reaction force per foot).
pub const FOOT_SEGMENTS: [&str; 2] = ["foot_l", "foot_r"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Side::Left => "_l",
            Side::Right => "_r",
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Left => f.write_str("left"),
            Side::Right => f.write_str("right"),
        }
    }
}

/// Sagittal joint type, shared by both legs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Hip,
    Knee,
    Ankle,
}

impl JointKind {
    pub const ALL: [JointKind; 3] = [JointKind::Hip, JointKind::Knee, JointKind::Ankle];

    pub fn name(self) -> &'static str {
        match self {
            JointKind::Hip => "hip",
            JointKind::Knee => "knee",
            JointKind::Ankle => "ankle",
        }
    }

    /// Index into the six-joint vector.
    pub fn joint_index(self, side: Side) -> usize {
        side.index() * 3
            + match self {
                JointKind::Hip => 0,
                JointKind::Knee => 1,
                JointKind::Ankle => 2,
            }
    }
}

/// Swaps the left and right halves of a six-joint vector.
pub fn mirror_joints<T: Copy>(v: &[T; N_JOINTS]) -> [T; N_JOINTS] {
    [v[3], v[4], v[5], v[0], v[1], v[2]]
}

/// Splits a joint name such as `knee_r` into its kind and side.
pub fn parse_joint(name: &str) -> Option<(JointKind, Side)> {
    let (base, side) = if let Some(b) = name.strip_suffix("_l") {
        (b, Side::Left)
    } else {
        let b = name.strip_suffix("_r")?;
        (b, Side::Right)
    };
    let kind = match base {
        "hip" => JointKind::Hip,
        "knee" => JointKind::Knee,
        "ankle" => JointKind::Ankle,
        _ => return None,
    };
    Some((kind, side))
}
