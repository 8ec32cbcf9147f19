//! Recorded episodes: per-control-step snapshots plus run metadata.

use serde::{Deserialize, Serialize};

use crate::dynamics::ModelState;
use crate::metabolics::MetabolicRates;
use crate::reward::{Phase, RewardBreakdown};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// s since episode start
    pub time: f64,
    pub state: ModelState,
    pub excitation: Vec<f64>,
    pub activation: Vec<f64>,
    /// N·m per internal joint
    pub exo_torque: Vec<f64>,
    pub reward: RewardBreakdown,
    /// Averaged over the control interval.
    pub metabolics: Vec<MetabolicRates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub fingerprint: String,
    /// m/s
    pub speed: f64,
    pub phase: Phase,
    pub device: String,
    /// Weakened muscles and their caps.
    pub mask: Vec<(String, f64)>,
    /// kg, including device
    pub model_mass: f64,
    /// Hz
    pub control_rate: f64,
    /// Reference time of the first record minus one control period, s.
    pub clip_start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub meta: TraceMeta,
    pub steps: Vec<StepRecord>,
    pub terminated: bool,
    pub truncated: bool,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Undiscounted sum of composite rewards.
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward.total).sum()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.meta.control_rate
    }

    /// One channel per step.
    pub fn channel(&self, f: impl Fn(&StepRecord) -> f64) -> Vec<f64> {
        self.steps.iter().map(f).collect()
    }

    /// Per-step muscle rates, as consumed by the gross cost.
    pub fn metabolic_samples(&self) -> Vec<&[MetabolicRates]> {
        self.steps.iter().map(|s| s.metabolics.as_slice()).collect()
    }

    /// Uniform grid, monotone time and equal channel lengths.
    pub fn is_consistent(&self) -> bool {
        let dt = self.dt();
        let Some(first) = self.steps.first() else {
            return true;
        };
        let (m, j) = (first.excitation.len(), first.exo_torque.len());
        self.steps.iter().enumerate().all(|(i, s)| {
            (s.time - (i + 1) as f64 * dt).abs() < 1e-9
                && s.excitation.len() == m
                && s.activation.len() == m
                && s.metabolics.len() == m
                && s.exo_torque.len() == j
        })
    }
}
