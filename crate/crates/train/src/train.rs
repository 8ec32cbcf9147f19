use std::fs::File;
use std::path::PathBuf;
use std::sync::Arc;

use gaitlab_core::env::{EnvAssets, EnvConfig, GaitEnv};
use gaitlab_core::reward::Phase;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::PolicyCheckpoint;
use crate::config::TrainerConfig;
use crate::eval::{random_policy, run_episodes, EvalSummary};
use crate::replay::ReplayBuffer;
use crate::rollout::{CollectorPool, EpisodeStats, StepSums};
use crate::sac::{Sac, UpdateStats};
use crate::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainPhase {
    Base,
    ExoFinetune,
    WeaknessFinetune,
}

impl TrainPhase {
    pub fn name(self) -> &'static str {
        match self {
            Self::Base => "base",
            Self::ExoFinetune => "exo-finetune",
            Self::WeaknessFinetune => "weakness-finetune",
        }
    }

    pub fn parse(s: &str) -> Result<Self, TrainError> {
        match s {
            "base" => Ok(Self::Base),
            "exo-finetune" | "exo" => Ok(Self::ExoFinetune),
            "weakness-finetune" | "weakness" => Ok(Self::WeaknessFinetune),
            _ => Err(TrainError::Config(format!(
                "unknown phase '{s}' (expected base, exo-finetune or weakness-finetune)"
            ))),
        }
    }

    /// Environment configuration for this phase: selects the reward
    /// profile and checks the device / weakness settings it needs.
    pub fn env_config(self, env: &EnvConfig) -> Result<EnvConfig, TrainError> {
        let mut cfg = env.clone();
        match self {
            Self::Base => cfg.phase = Phase::Base,
            Self::ExoFinetune => {
                if !cfg.device_spec()?.is_active() {
                    return Err(TrainError::Config("exo-finetune needs an exoskeleton device, got 'none'".into()));
                }
                cfg.phase = Phase::Finetune;
            }
            Self::WeaknessFinetune => {
                if cfg.weakness.is_none() && cfg.weakness_caps.is_empty() {
                    return Err(TrainError::Config("weakness-finetune needs a weakness preset or caps".into()));
                }
                cfg.phase = Phase::Finetune;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    /// Aggregate environment steps in this phase.
    pub step: usize,
    /// Episodes completed since the previous row.
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_length: f64,
    pub r_pos: f64,
    pub r_vel: f64,
    pub r_root: f64,
    pub r_ee: f64,
    pub r_torq: f64,
    pub r_eff: f64,
    pub r_smt: f64,
    pub r_exo: f64,
    /// N·m, mean over steps and assisted channels.
    pub exo_torque: f64,
    pub exo_torque_max: f64,
    pub alpha: f64,
    pub entropy: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub lr: f64,
    pub updates: u64,
}

impl LogRow {
    pub fn terms(&self) -> [f64; 8] {
        [
            self.r_pos, self.r_vel, self.r_root, self.r_ee, self.r_torq, self.r_eff, self.r_smt, self.r_exo,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub assets: Arc<EnvAssets>,
    pub env: EnvConfig,
    pub trainer: TrainerConfig,
    pub phase: TrainPhase,
    pub init: Option<PolicyCheckpoint>,
    /// Append-only CSV metrics log.
    pub log_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PolicyCheckpoint,
    pub log: Vec<LogRow>,
    /// Measured before any update, with the same episode count and seed as
    /// the final evaluation.
    pub random_baseline: EvalSummary,
    /// Deterministic policy after training.
    pub final_eval: EvalSummary,
}

#[derive(Default)]
struct Window {
    episodes: Vec<EpisodeStats>,
    sums: StepSums,
    updates: Vec<UpdateStats>,
}

impl Window {
    fn row(&mut self, step: usize, sac: &Sac, lr: f64, exo_max: f64) -> LogRow {
        let n = self.episodes.len();
        let mean = |f: &dyn Fn(&EpisodeStats) -> f64| {
            if n == 0 {
                f64::NAN
            } else {
                self.episodes.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let m = self.updates.len();
        let upd = |f: &dyn Fn(&UpdateStats) -> f64| {
            if m == 0 {
                f64::NAN
            } else {
                self.updates.iter().map(f).sum::<f64>() / m as f64
            }
        };
        let t = self.sums.term_means();
        let row = LogRow {
            step,
            episodes: n,
            mean_return: mean(&|e| e.ret),
            mean_length: mean(&|e| e.length as f64),
            r_pos: t[0],
            r_vel: t[1],
            r_root: t[2],
            r_ee: t[3],
            r_torq: t[4],
            r_eff: t[5],
            r_smt: t[6],
            r_exo: t[7],
            exo_torque: self.sums.mean_exo_abs(),
            exo_torque_max: exo_max,
            alpha: sac.alpha(),
            entropy: upd(&|u| u.entropy),
            critic_loss: upd(&|u| u.critic_loss),
            actor_loss: upd(&|u| u.actor_loss),
            lr,
            updates: sac.updates(),
        };
        *self = Window::default();
        row
    }
}

/// Runs one training phase end to end: random baseline, collection and
/// updates, final deterministic evaluation, checkpoint.
pub fn train(setup: TrainSetup) -> Result<TrainOutcome, TrainError> {
    let TrainSetup {
        assets,
        env,
        trainer: cfg,
        phase,
        init,
        log_path,
    } = setup;
    cfg.validate()?;
    let env_cfg = phase.env_config(&env)?;
    if phase != TrainPhase::Base && init.is_none() {
        return Err(TrainError::Config(format!("{} requires an init checkpoint", phase.name())));
    }

    let mut eval_env = GaitEnv::new(assets.clone(), env_cfg.clone())?;
    let (obs_dim, act_dim) = (eval_env.observation_dim(), eval_env.action_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut sac, prior_steps) = match &init {
        Some(ck) => {
            if (ck.header.obs_dim, ck.header.act_dim) != (obs_dim, act_dim) {
                return Err(TrainError::Config(format!(
                    "checkpoint spaces {}x{} do not match the environment's {obs_dim}x{act_dim}",
                    ck.header.obs_dim, ck.header.act_dim
                )));
            }
            let mut sac = ck.sac()?;
            sac.configure(&cfg);
            (sac, ck.header.steps)
        }
        None => (Sac::new(obs_dim, act_dim, &cfg, &mut rng), 0),
    };

    let eval_seed = cfg.seed ^ 0x5eed_e7a1;
    let random_baseline = random_policy(&mut eval_env, cfg.eval_episodes, eval_seed)?.summary;
    log::info!(
        "{}: random policy mean return {:.3} over {} episodes",
        phase.name(),
        random_baseline.mean_reward,
        random_baseline.episodes
    );

    let exo = eval_env.exo();
    let assisted = exo.assisted();
    let exo_max = if assisted.is_empty() {
        0.0
    } else {
        assisted.iter().map(|&j| exo.torque_max()[j]).sum::<f64>() / assisted.len() as f64
    };

    let envs = (0..cfg.n_envs)
        .map(|_| GaitEnv::new(assets.clone(), env_cfg.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let pool = CollectorPool::spawn(envs, cfg.seed.wrapping_add(1))?;
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, obs_dim, act_dim);
    let mut writer = match &log_path {
        Some(p) => {
            let f = File::create(p).map_err(|e| TrainError::Io(format!("{}: {e}", p.display())))?;
            Some(csv::Writer::from_writer(f))
        }
        None => None,
    };

    let round = cfg.round_steps();
    let period = cfg.update_period();
    let mut steps = 0usize;
    let mut pending = 0usize;
    let mut next_log = cfg.log_interval;
    let mut window = Window::default();
    let mut log = Vec::new();
    while steps < cfg.total_steps {
        let random = init.is_none() && steps < cfg.learning_starts;
        let reports = pool.run(round, Arc::new(sac.actor.clone()), random)?;
        for r in reports {
            for t in &r.transitions {
                buffer.push(t)?;
            }
            window.episodes.extend(r.episodes);
            window.sums.add(&r.sums);
        }
        steps += round * pool.len();
        pending += round * pool.len();
        while pending >= period {
            pending -= period;
            if steps < cfg.learning_starts || buffer.len() < cfg.batch_size {
                continue;
            }
            for _ in 0..cfg.gradient_steps {
                let batch = buffer.sample(cfg.batch_size, &mut rng)?;
                window.updates.push(sac.update(&batch, cfg.lr_at(steps), &mut rng)?);
            }
        }
        if log.is_empty() || steps >= next_log || steps >= cfg.total_steps {
            while next_log <= steps {
                next_log += cfg.log_interval;
            }
            let row = window.row(steps, &sac, cfg.lr_at(steps), exo_max);
            log::info!(
                "{} step {}: return {:.3} len {:.1} alpha {:.4} entropy {:.2}",
                phase.name(),
                row.step,
                row.mean_return,
                row.mean_length,
                row.alpha,
                row.entropy
            );
            if let Some(w) = writer.as_mut() {
                w.serialize(&row).and_then(|_| Ok(w.flush()?)).map_err(|e| TrainError::Io(e.to_string()))?;
            }
            log.push(row);
        }
    }
    drop(pool);

    let actor = sac.actor.clone();
    let final_eval = run_episodes(&mut eval_env, cfg.eval_episodes, eval_seed, &mut |obs| actor.mean_action(obs))?.summary;
    log::info!(
        "{}: deterministic policy mean return {:.3} (random {:.3})",
        phase.name(),
        final_eval.mean_reward,
        random_baseline.mean_reward
    );
    let checkpoint = PolicyCheckpoint::new(
        phase,
        &cfg,
        &env_cfg,
        eval_env.fingerprint(),
        prior_steps + steps as u64,
        rng,
        &sac,
    );
    Ok(TrainOutcome {
        checkpoint,
        log,
        random_baseline,
        final_eval,
    })
}
