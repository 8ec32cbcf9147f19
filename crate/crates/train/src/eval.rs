use std::sync::Arc;

use gaitlab_core::env::{EnvAssets, GaitEnv};
use gaitlab_core::trace::EpisodeTrace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::PolicyCheckpoint;
use crate::rollout::{mean_assist_torque, StepSums, N_TERMS};
use crate::TrainError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    /// Mean undiscounted episode return.
    pub mean_reward: f64,
    pub mean_length: f64,
    /// Per-step means of each reward term.
    pub term_means: [f64; N_TERMS],
    /// N·m, averaged over steps and assisted channels.
    pub mean_exo_torque: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub traces: Vec<EpisodeTrace>,
    pub summary: EvalSummary,
}

/// Runs `n` episodes, the first reset with `seed` and later ones continuing
/// the environment's own generator.
pub fn run_episodes(
    env: &mut GaitEnv,
    n: usize,
    seed: u64,
    policy: &mut dyn FnMut(&[f64]) -> Vec<f64>,
) -> Result<Evaluation, TrainError> {
    let mut traces = Vec::with_capacity(n);
    let mut sums = StepSums::default();
    for k in 0..n {
        let mut obs = env.reset(if k == 0 { Some(seed) } else { None })?;
        let mut trace = EpisodeTrace {
            meta: env.trace_meta(),
            steps: Vec::new(),
            terminated: false,
            truncated: false,
        };
        loop {
            let action = policy(&obs);
            let out = env.step(&action)?;
            trace.steps.push(env.record());
            sums.steps += 1;
            for (a, b) in sums.terms.iter_mut().zip(out.reward.terms()) {
                *a += b;
            }
            sums.exo_abs += mean_assist_torque(env);
            obs = out.observation;
            if out.terminated || out.truncated {
                trace.terminated = out.terminated;
                trace.truncated = out.truncated;
                break;
            }
        }
        traces.push(trace);
    }
    let summary = if traces.is_empty() {
        EvalSummary::default()
    } else {
        let n = traces.len() as f64;
        EvalSummary {
            episodes: traces.len(),
            mean_reward: traces.iter().map(|t| t.total_reward()).sum::<f64>() / n,
            mean_length: traces.iter().map(|t| t.len() as f64).sum::<f64>() / n,
            term_means: sums.term_means(),
            mean_exo_torque: sums.mean_exo_abs(),
        }
    };
    Ok(Evaluation { traces, summary })
}

/// Uniform random actions in [−1, 1].
pub fn random_policy(env: &mut GaitEnv, n: usize, seed: u64) -> Result<Evaluation, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = env.action_dim();
    run_episodes(env, n, seed, &mut |_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Runs a checkpointed policy in the environment it was trained on. The
/// mean action is used when `deterministic`.
pub fn evaluate(
    checkpoint: &PolicyCheckpoint,
    assets: Arc<EnvAssets>,
    n: usize,
    deterministic: bool,
    seed: u64,
) -> Result<Evaluation, TrainError> {
    let mut env = GaitEnv::new(assets, checkpoint.header.env.clone())?;
    if env.fingerprint() != checkpoint.header.env_fingerprint {
        return Err(TrainError::Fingerprint {
            checkpoint: checkpoint.header.env_fingerprint.clone(),
            env: env.fingerprint().to_string(),
        });
    }
    let actor = checkpoint.actor()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_episodes(&mut env, n, seed, &mut |obs| actor.act(obs, deterministic, &mut rng))
}
