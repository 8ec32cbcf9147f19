//! Eight-term imitation reward: five exponential tracking kernels minus
//! effort, smoothness and exoskeleton-usage penalties.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metabolics::MetabolicRates;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("invalid reward configuration: {0}")]
    Invalid(String),
    #[error("unknown reward profile `{0}` (expected `base` or `finetune`)")]
    UnknownProfile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Base,
    Finetune,
}

/// Gains (negative) and weights (stored unsigned; penalties are subtracted).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    pub phase: Phase,
    pub k_pos: f64,
    pub k_vel: f64,
    pub k_root: f64,
    pub k_ee: f64,
    pub k_torq: f64,
    pub w_pos: f64,
    pub w_vel: f64,
    pub w_root: f64,
    pub w_ee: f64,
    pub w_torq: f64,
    pub w_eff: f64,
    pub w_smt: f64,
    pub w_exo: f64,
}

impl RewardConfig {
    pub fn base() -> Self {
        Self {
            phase: Phase::Base,
            k_pos: -2.0,
            k_vel: -0.05,
            k_root: -500.0,
            k_ee: -80.0,
            k_torq: -2.0,
            w_pos: 0.25,
            w_vel: 0.1,
            w_root: 0.15,
            w_ee: 0.25,
            w_torq: 0.25,
            w_eff: 3e-5,
            w_smt: 1.0,
            w_exo: 0.0,
        }
    }

    pub fn finetune() -> Self {
        Self {
            phase: Phase::Finetune,
            k_pos: -0.4,
            k_vel: -0.01,
            k_root: -500.0,
            k_ee: -16.0,
            k_torq: -0.4,
            w_eff: 3e-4,
            w_exo: 0.2,
            ..Self::base()
        }
    }

    /// `base` or `finetune`.
    pub fn profile(name: &str) -> Result<Self, RewardError> {
        match name {
            "base" => Ok(Self::base()),
            "finetune" | "fine-tune" => Ok(Self::finetune()),
            other => Err(RewardError::UnknownProfile(other.to_string())),
        }
    }

    pub fn gains(&self) -> [f64; 5] {
        [self.k_pos, self.k_vel, self.k_root, self.k_ee, self.k_torq]
    }

    pub fn tracking_weights(&self) -> [f64; 5] {
        [self.w_pos, self.w_vel, self.w_root, self.w_ee, self.w_torq]
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if self.gains().iter().any(|k| !(*k < 0.0)) {
            return Err(RewardError::Invalid("all tracking gains must be negative".into()));
        }
        let weights = self.tracking_weights();
        if weights
            .iter()
            .chain([self.w_eff, self.w_smt, self.w_exo].iter())
            .any(|w| !(*w >= 0.0) || !w.is_finite())
        {
            return Err(RewardError::Invalid("weights must be finite and non-negative".into()));
        }
        if self.phase == Phase::Base && self.w_exo != 0.0 {
            return Err(RewardError::Invalid("the base phase has no exoskeleton penalty (w_exo must be 0)".into()));
        }
        Ok(())
    }
}

/// Squared-error sums feeding the five tracking kernels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Deviations {
    /// rad², root pitch and internal joints
    pub pos: f64,
    /// (rad/s)²
    pub vel: f64,
    /// m², root position
    pub root: f64,
    /// m², feet and head
    pub ee: f64,
    /// (N·m)², net joint moments against mass-rescaled reference moments
    pub torq: f64,
}

impl Deviations {
    pub fn is_zero(&self) -> bool {
        [self.pos, self.vel, self.root, self.ee, self.torq].iter().all(|d| *d == 0.0)
    }
}

/// Sum of squared differences.
pub fn squared_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Per-step reward terms and their weighted combination.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub pos: f64,
    pub vel: f64,
    pub root: f64,
    pub ee: f64,
    pub torq: f64,
    /// W
    pub eff: f64,
    pub smt: f64,
    pub exo: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub const TERM_NAMES: [&'static str; 8] = ["pos", "vel", "root", "ee", "torq", "eff", "smt", "exo"];

    pub fn terms(&self) -> [f64; 8] {
        [self.pos, self.vel, self.root, self.ee, self.torq, self.eff, self.smt, self.exo]
    }
}

/// `exp(k · deviation)`.
pub fn tracking_term(deviation: f64, gain: f64) -> f64 {
    (gain * deviation).exp()
}

/// Summed muscle energy rate, W (no basal term).
pub fn effort_term(rates: &[MetabolicRates]) -> f64 {
    rates.iter().map(MetabolicRates::watts).sum()
}

/// Mean squared change of the excitation vector.
pub fn smoothness_term(excitation: &[f64], previous: &[f64]) -> f64 {
    assert_eq!(excitation.len(), previous.len(), "excitation vectors differ in length");
    if excitation.is_empty() {
        return 0.0;
    }
    squared_error(excitation, previous) / excitation.len() as f64
}

/// Mean normalized exoskeleton torque magnitude over the assisted joints.
/// `torques` and `torque_max` are parallel; an empty device gives 0.
pub fn exo_energy_term(torques: &[f64], torque_max: &[f64]) -> f64 {
    assert_eq!(torques.len(), torque_max.len(), "one limit per assisted joint");
    if torques.is_empty() {
        return 0.0;
    }
    let sum: f64 = torques.iter().zip(torque_max).map(|(t, m)| t.abs() / m).sum();
    sum / torques.len() as f64
}

/// Weighted combination of the eight terms.
pub fn composite(b: &RewardBreakdown, cfg: &RewardConfig) -> f64 {
    cfg.w_pos * b.pos + cfg.w_vel * b.vel + cfg.w_root * b.root + cfg.w_ee * b.ee + cfg.w_torq * b.torq
        - cfg.w_eff * b.eff
        - cfg.w_smt * b.smt
        - cfg.w_exo * b.exo
}

/// Evaluates all terms and the composite.
pub fn evaluate(dev: &Deviations, effort: f64, smoothness: f64, exo: f64, cfg: &RewardConfig) -> RewardBreakdown {
    let mut b = RewardBreakdown {
        pos: tracking_term(dev.pos, cfg.k_pos),
        vel: tracking_term(dev.vel, cfg.k_vel),
        root: tracking_term(dev.root, cfg.k_root),
        ee: tracking_term(dev.ee, cfg.k_ee),
        torq: tracking_term(dev.torq, cfg.k_torq),
        eff: effort,
        smt: smoothness,
        exo,
        total: 0.0,
    };
    b.total = composite(&b, cfg);
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        RewardConfig::base().validate().unwrap();
        RewardConfig::finetune().validate().unwrap();
        let mut bad = RewardConfig::base();
        bad.w_exo = 0.2;
        assert!(bad.validate().is_err());
        bad = RewardConfig::finetune();
        bad.k_ee = 0.0;
        assert!(bad.validate().is_err());
        assert!(matches!(RewardConfig::profile("run"), Err(RewardError::UnknownProfile(_))));
    }

    #[test]
    fn tracking_weights_sum_to_one() {
        let s: f64 = RewardConfig::base().tracking_weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exo_term_single_joint_pair() {
        assert_eq!(exo_energy_term(&[15.0, 0.0], &[30.0, 30.0]), 0.25);
        assert_eq!(exo_energy_term(&[-30.0, 30.0], &[30.0, 30.0]), 1.0);
        assert_eq!(exo_energy_term(&[], &[]), 0.0);
    }
}
