//! Exoskeleton torque pipeline: scale, rate limit, first-order low-pass.

use crate::dynamics::ExoDeviceSpec;
use crate::layout::{JOINT_NAMES, N_JOINTS};

/// Zero-order-hold coefficient of a first-order low-pass sampled every `dt`.
pub fn lowpass_alpha(cutoff: f64, dt: f64) -> f64 {
    1.0 - (-std::f64::consts::TAU * cutoff * dt).exp()
}

/// One command channel per internal joint; channels of joints the device
/// does not assist always produce zero torque.
#[derive(Debug, Clone, PartialEq)]
pub struct ExoActuator {
    /// N·m per joint, 0 when unassisted.
    torque_max: [f64; N_JOINTS],
    alpha: f64,
    command: [f64; N_JOINTS],
    output: [f64; N_JOINTS],
}

impl ExoActuator {
    pub fn new(device: &ExoDeviceSpec, model_mass: f64, control_dt: f64) -> Self {
        let mut torque_max = [0.0; N_JOINTS];
        if device.is_active() {
            for (kind, side) in device.assisted() {
                let j = kind.joint_index(side);
                torque_max[j] = device.torque_max_for(JOINT_NAMES[j], model_mass);
            }
        }
        let alpha = if device.is_active() {
            lowpass_alpha(device.filter_cutoff, control_dt)
        } else {
            0.0
        };
        Self {
            torque_max,
            alpha,
            command: [0.0; N_JOINTS],
            output: [0.0; N_JOINTS],
        }
    }

    /// Inactive actuator (no device).
    pub fn disabled() -> Self {
        Self {
            torque_max: [0.0; N_JOINTS],
            alpha: 0.0,
            command: [0.0; N_JOINTS],
            output: [0.0; N_JOINTS],
        }
    }

    pub fn reset(&mut self) {
        self.command = [0.0; N_JOINTS];
        self.output = [0.0; N_JOINTS];
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn torque_max(&self) -> &[f64; N_JOINTS] {
        &self.torque_max
    }

    /// Indices of assisted joints.
    pub fn assisted(&self) -> Vec<usize> {
        (0..N_JOINTS).filter(|&j| self.torque_max[j] > 0.0).collect()
    }

    /// Rate-limited command before the filter, N·m.
    pub fn command(&self) -> &[f64; N_JOINTS] {
        &self.command
    }

    /// Filtered torque applied to the joints, N·m.
    pub fn output(&self) -> &[f64; N_JOINTS] {
        &self.output
    }

    /// Advances one control step. `action` entries are clipped to [−1, 1].
    pub fn update(&mut self, action: &[f64]) -> &[f64; N_JOINTS] {
        debug_assert_eq!(action.len(), N_JOINTS);
        for j in 0..N_JOINTS {
            let max = self.torque_max[j];
            if max == 0.0 {
                continue;
            }
            let target = action[j].clamp(-1.0, 1.0) * max;
            let prev = self.command[j];
            self.command[j] = prev + (target - prev).clamp(-max, max);
            self.output[j] += self.alpha * (self.command[j] - self.output[j]);
        }
        &self.output
    }

    /// Mean normalized torque magnitude over the assisted joints.
    pub fn usage(&self) -> f64 {
        let assisted = self.assisted();
        let torques: Vec<f64> = assisted.iter().map(|&j| self.output[j]).collect();
        let limits: Vec<f64> = assisted.iter().map(|&j| self.torque_max[j]).collect();
        crate::reward::exo_energy_term(&torques, &limits)
    }
}
