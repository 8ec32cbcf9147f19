//! Bundled configuration files.

use crate::dynamics::{ExoDeviceSpec, SkeletonSpec};
use crate::muscle::MuscleSet;

pub const SKELETON_DEFAULT: &str = include_str!("../configs/skeleton_default.toml");
pub const MUSCLES_DEFAULT: &str = include_str!("../configs/muscles_default.toml");
pub const DEVICE_HIP: &str = include_str!("../configs/device_hip.toml");
pub const DEVICE_ANKLE: &str = include_str!("../configs/device_ankle.toml");
pub const DEVICE_NONE: &str = include_str!("../configs/device_none.toml");

pub fn default_skeleton() -> SkeletonSpec {
    SkeletonSpec::from_toml_str(SKELETON_DEFAULT).expect("bundled skeleton is valid")
}

pub fn default_muscles() -> MuscleSet {
    MuscleSet::from_toml_str(MUSCLES_DEFAULT).expect("bundled muscle set is valid")
}

pub fn hip_device() -> ExoDeviceSpec {
    ExoDeviceSpec::from_toml_str(DEVICE_HIP).expect("bundled hip device is valid")
}

pub fn ankle_device() -> ExoDeviceSpec {
    ExoDeviceSpec::from_toml_str(DEVICE_ANKLE).expect("bundled ankle device is valid")
}

/// Bundled device by kind name (`none`, `hip`, `ankle`).
pub fn device_by_name(name: &str) -> Option<ExoDeviceSpec> {
    match name {
        "none" => Some(ExoDeviceSpec::none()),
        "hip" => Some(hip_device()),
        "ankle" => Some(ankle_device()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_files_parse() {
        let sk = default_skeleton();
        assert_eq!(sk.segments.len(), 7);
        assert_eq!(sk.joints.len(), 6);
        assert!((hip_device().added_mass_total() - 2.9).abs() < 1e-12);
        assert!((ankle_device().added_mass_total() - 3.9).abs() < 1e-12);
        assert!(!ExoDeviceSpec::from_toml_str(DEVICE_NONE).unwrap().is_active());
    }
}
