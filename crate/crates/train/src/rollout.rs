//! Parallel experience collection.
//!
//! Each collector thread owns one environment. The learner broadcasts a
//! policy snapshot and a step count, every collector answers with its
//! transitions, and the learner consumes the answers in collector order.
//! Results are therefore independent of thread scheduling.

use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;

use gaitlab_core::env::GaitEnv;
use gaitlab_core::reward::RewardBreakdown;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::replay::Transition;
use crate::sac::Actor;
use crate::TrainError;

/// Per-step reward terms, in `RewardBreakdown::TERM_NAMES` order.
pub const N_TERMS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub ret: f64,
    pub length: usize,
    pub terminated: bool,
}

/// Step-level sums gathered during one round.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepSums {
    pub steps: usize,
    pub terms: [f64; N_TERMS],
    /// Σ over steps of the mean |τ| across assisted channels, N·m.
    pub exo_abs: f64,
}

impl StepSums {
    pub fn add(&mut self, other: &StepSums) {
        self.steps += other.steps;
        for (a, b) in self.terms.iter_mut().zip(other.terms) {
            *a += b;
        }
        self.exo_abs += other.exo_abs;
    }

    pub fn term_means(&self) -> [f64; N_TERMS] {
        let n = self.steps.max(1) as f64;
        self.terms.map(|t| t / n)
    }

    pub fn mean_exo_abs(&self) -> f64 {
        self.exo_abs / self.steps.max(1) as f64
    }

    fn record(&mut self, r: &RewardBreakdown, exo_abs: f64) {
        self.steps += 1;
        for (a, b) in self.terms.iter_mut().zip(r.terms()) {
            *a += b;
        }
        self.exo_abs += exo_abs;
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub transitions: Vec<Transition>,
    pub episodes: Vec<EpisodeStats>,
    pub sums: StepSums,
}

/// Mean |τ| over the channels the device drives; 0 without a device.
pub fn mean_assist_torque(env: &GaitEnv) -> f64 {
    let idx = env.exo().assisted();
    if idx.is_empty() {
        return 0.0;
    }
    idx.iter().map(|&j| env.exo_torques()[j].abs()).sum::<f64>() / idx.len() as f64
}

pub struct Collector {
    env: GaitEnv,
    obs: Vec<f64>,
    rng: ChaCha8Rng,
    ep_return: f64,
    ep_len: usize,
}

impl Collector {
    pub fn new(mut env: GaitEnv, seed: u64, stream: u64) -> Result<Self, TrainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let obs = env.reset(Some(rng.random()))?;
        Ok(Self {
            env,
            obs,
            rng,
            ep_return: 0.0,
            ep_len: 0,
        })
    }

    /// Advances `steps` environment steps with the given policy (or uniform
    /// random actions), resetting at episode ends.
    pub fn run(&mut self, steps: usize, actor: &Actor, random: bool) -> Result<Report, TrainError> {
        let mut report = Report::default();
        let n_act = self.env.action_dim();
        for _ in 0..steps {
            let action: Vec<f64> = if random {
                (0..n_act).map(|_| self.rng.random_range(-1.0..1.0)).collect()
            } else {
                actor.sample_action(&self.obs, &mut self.rng)
            };
            let out = self.env.step(&action)?;
            if let Some(d) = &out.diagnostic {
                log::warn!("episode cut short: {d}");
            }
            report.sums.record(&out.reward, mean_assist_torque(&self.env));
            self.ep_return += out.reward.total;
            self.ep_len += 1;
            let done = out.terminated || out.truncated;
            report.transitions.push(Transition {
                observation: std::mem::replace(&mut self.obs, out.observation),
                action,
                reward: out.reward.total,
                next_observation: self.obs.clone(),
                terminated: out.terminated,
                truncated: out.truncated && !out.terminated,
            });
            if done {
                report.episodes.push(EpisodeStats {
                    ret: self.ep_return,
                    length: self.ep_len,
                    terminated: out.terminated,
                });
                self.ep_return = 0.0;
                self.ep_len = 0;
                self.obs = self.env.reset(None)?;
            }
        }
        Ok(report)
    }
}

enum Command {
    Run { steps: usize, actor: Arc<Actor>, random: bool },
}

struct Worker {
    commands: Sender<Command>,
    reports: Receiver<Result<Report, TrainError>>,
    handle: Option<JoinHandle<()>>,
}

/// Collectors running on their own threads.
pub struct CollectorPool {
    workers: Vec<Worker>,
}

impl CollectorPool {
    pub fn spawn(envs: Vec<GaitEnv>, seed: u64) -> Result<Self, TrainError> {
        let mut workers = Vec::with_capacity(envs.len());
        for (i, env) in envs.into_iter().enumerate() {
            let mut collector = Collector::new(env, seed, i as u64 + 1)?;
            let (cmd_tx, cmd_rx) = channel::<Command>();
            let (rep_tx, rep_rx) = channel();
            let handle = std::thread::Builder::new()
                .name(format!("collector-{i}"))
                .spawn(move || {
                    for Command::Run { steps, actor, random } in cmd_rx {
                        if rep_tx.send(collector.run(steps, &actor, random)).is_err() {
                            break;
                        }
                    }
                })
                .map_err(|e| TrainError::Collector(e.to_string()))?;
            workers.push(Worker {
                commands: cmd_tx,
                reports: rep_rx,
                handle: Some(handle),
            });
        }
        Ok(Self { workers })
    }

    pub fn len(&self) -> usize {
        self.workers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }

    /// One lockstep round; reports come back in collector order.
    pub fn run(&self, steps: usize, actor: Arc<Actor>, random: bool) -> Result<Vec<Report>, TrainError> {
        for w in &self.workers {
            w.commands
                .send(Command::Run {
                    steps,
                    actor: actor.clone(),
                    random,
                })
                .map_err(|_| TrainError::Collector("collector thread exited".into()))?;
        }
        self.workers
            .iter()
            .map(|w| {
                w.reports
                    .recv()
                    .map_err(|_| TrainError::Collector("collector thread exited".into()))?
            })
            .collect()
    }
}

impl Drop for CollectorPool {
    fn drop(&mut self) {
        for w in &mut self.workers {
            // closing the command channel ends the worker loop
            let (dead, _) = channel();
            drop(std::mem::replace(&mut w.commands, dead));
            if let Some(h) = w.handle.take() {
                let _ = h.join();
            }
        }
    }
}
