use serde::{Deserialize, Serialize};

use crate::TrainError;

/// Entropy coefficient handling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyMode {
    /// Tuned toward a target entropy of −dim(A), starting from `initial_alpha`.
    Auto,
    Fixed(f64),
}

/// What `train_freq` counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrequencyUnit {
    /// Environment steps summed over all collectors.
    Aggregate,
    /// Steps of each collector.
    PerEnv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of `learning_rate` reached at `total_steps`.
    pub final_lr_fraction: f64,
    pub soft_update: f64,
    pub entropy: EntropyMode,
    pub initial_alpha: f64,
    pub discount: f64,
    pub train_freq: usize,
    pub freq_unit: FrequencyUnit,
    pub gradient_steps: usize,
    pub target_update_interval: usize,
    pub total_steps: usize,
    pub n_envs: usize,
    pub replay_capacity: usize,
    /// Uniform random actions before this many steps (fresh runs only).
    pub learning_starts: usize,
    /// Aggregate steps between log rows.
    pub log_interval: usize,
    pub eval_episodes: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl TrainerConfig {
    /// Full-scale hyperparameters, kept as documentation of the original
    /// setup. Far beyond a desktop budget.
    pub fn full() -> Self {
        Self {
            actor_hidden: vec![512, 512, 256],
            critic_hidden: vec![512, 512, 256],
            batch_size: 256,
            learning_rate: 3e-4,
            final_lr_fraction: 0.1,
            soft_update: 0.02,
            entropy: EntropyMode::Auto,
            initial_alpha: 1.0,
            discount: 0.95,
            train_freq: 4,
            freq_unit: FrequencyUnit::Aggregate,
            gradient_steps: 4,
            target_update_interval: 1,
            total_steps: 600_000_000,
            n_envs: 96,
            replay_capacity: 1_000_000,
            learning_starts: 10_000,
            log_interval: 100_000,
            eval_episodes: 20,
            seed: 0,
        }
    }

    /// Full-scale fine-tune phases: 150M steps from a base checkpoint.
    pub fn full_finetune() -> Self {
        Self {
            total_steps: 150_000_000,
            ..Self::full()
        }
    }

    /// Desktop base phase: 200k steps on four environments.
    pub fn desk() -> Self {
        Self {
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            train_freq: 16,
            total_steps: 200_000,
            n_envs: 4,
            replay_capacity: 200_000,
            learning_starts: 2_000,
            log_interval: 5_000,
            ..Self::full()
        }
    }

    /// Desktop fine-tune phases: 50k steps from a base checkpoint.
    pub fn desk_finetune() -> Self {
        Self {
            total_steps: 50_000,
            replay_capacity: 50_000,
            learning_starts: 1_000,
            log_interval: 2_500,
            ..Self::desk()
        }
    }

    /// Named profiles: `full`, `full-finetune`, `desk`, `desk-finetune`.
    pub fn preset(name: &str) -> Result<Self, TrainError> {
        match name {
            "full" => Ok(Self::full()),
            "full-finetune" => Ok(Self::full_finetune()),
            "desk" => Ok(Self::desk()),
            "desk-finetune" => Ok(Self::desk_finetune()),
            _ => Err(TrainError::Config(format!(
                "unknown trainer preset '{name}' (expected full, full-finetune, desk or desk-finetune)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad("discount must lie in (0, 1)");
        }
        if !(self.soft_update > 0.0 && self.soft_update <= 1.0) {
            return bad("soft_update must lie in (0, 1]");
        }
        if self.batch_size > self.replay_capacity {
            return bad("batch_size must not exceed replay_capacity");
        }
        let counts = [
            self.batch_size,
            self.train_freq,
            self.gradient_steps,
            self.target_update_interval,
            self.total_steps,
            self.n_envs,
            self.replay_capacity,
            self.log_interval,
        ];
        if counts.contains(&0) {
            return bad("all counts must be >= 1");
        }
        if self.actor_hidden.is_empty() || self.critic_hidden.is_empty() || self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("hidden layers must be non-empty and positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return bad("final_lr_fraction must lie in [0, 1]");
        }
        match self.entropy {
            EntropyMode::Fixed(a) if !(a >= 0.0 && a.is_finite()) => bad("fixed entropy coefficient must be >= 0"),
            EntropyMode::Auto if !(self.initial_alpha > 0.0) => bad("initial_alpha must be > 0"),
            _ => Ok(()),
        }
    }

    /// Linear decay from `learning_rate` to `final_lr_fraction · learning_rate`
    /// over `total_steps`, flat afterwards.
    pub fn lr_at(&self, steps: usize) -> f64 {
        let progress = (steps as f64 / self.total_steps as f64).min(1.0);
        self.learning_rate * (1.0 - (1.0 - self.final_lr_fraction) * progress)
    }

    /// Aggregate environment steps between update bursts.
    pub fn update_period(&self) -> usize {
        match self.freq_unit {
            FrequencyUnit::Aggregate => self.train_freq,
            FrequencyUnit::PerEnv => self.train_freq * self.n_envs,
        }
    }

    /// Steps each collector takes per round.
    pub fn round_steps(&self) -> usize {
        (self.update_period() / self.n_envs).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["full", "full-finetune", "desk", "desk-finetune"] {
            TrainerConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(TrainerConfig::preset("huge").is_err());
    }

    #[test]
    fn invariants_rejected() {
        let mut c = TrainerConfig::desk();
        c.discount = 1.0;
        assert!(c.validate().is_err());
        let mut c = TrainerConfig::desk();
        c.batch_size = c.replay_capacity + 1;
        assert!(c.validate().is_err());
        let mut c = TrainerConfig::desk();
        c.soft_update = 0.0;
        assert!(c.validate().is_err());
        let mut c = TrainerConfig::desk();
        c.gradient_steps = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn schedule_ends_at_floor() {
        let c = TrainerConfig::desk();
        assert_eq!(c.lr_at(0), 3e-4);
        assert!((c.lr_at(c.total_steps) - 3e-5).abs() < 1e-18);
        assert_eq!(c.lr_at(2 * c.total_steps), c.lr_at(c.total_steps));
        assert_eq!(c.round_steps(), 4);
    }
}
