use std::sync::Arc;

use gaitlab_core::env::{EnvAssets, EnvConfig};
use gaitlab_core::refmotion::synth::SynthParams;
use gaitlab_train::replay::{ReplayBuffer, Transition};
use gaitlab_train::sac::{standard_normal, Batch, Sac};
use gaitlab_train::*;
use ndarray::Array1;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OBS: usize = 7;
const ACT: usize = 3;

fn small_config() -> TrainerConfig {
    TrainerConfig {
        actor_hidden: vec![16, 12],
        critic_hidden: vec![16, 12],
        batch_size: 24,
        ..TrainerConfig::desk()
    }
}

fn random_batch(rng: &mut ChaCha8Rng, rows: usize) -> Batch {
    Batch {
        obs: standard_normal(rows, OBS, rng),
        actions: standard_normal(rows, ACT, rng).mapv(f64::tanh),
        rewards: Array1::from_shape_fn(rows, |_| rng.random_range(-1.0..1.0)),
        next_obs: standard_normal(rows, OBS, rng),
        terminated: Array1::from_shape_fn(rows, |_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }),
    }
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

/// Central differences on `probes` random coordinates with |g| above noise.
fn fd_check(params: &mut dyn FnMut(usize, f64) -> f64, grad: &[f64], rng: &mut ChaCha8Rng, probes: usize) -> usize {
    let h = 1e-6;
    let mut checked = 0;
    for _ in 0..probes {
        let i = rng.random_range(0..grad.len());
        if grad[i].abs() < 1e-6 {
            continue;
        }
        let up = params(i, h);
        let down = params(i, -h);
        let fd = (up - down) / (2.0 * h);
        assert!(relative(grad[i], fd) < 1e-4, "param {i}: analytic {} vs fd {fd}", grad[i]);
        checked += 1;
    }
    checked
}

#[test]
fn critic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut sac = Sac::new(OBS, ACT, &small_config(), &mut rng);
    // distinct targets so the twin minimum is exercised
    for t in &mut sac.targets {
        t.params_mut().iter_mut().for_each(|p| *p += rng.random_range(-0.1..0.1));
    }
    let batch = random_batch(&mut rng, 32);
    let next_eps = standard_normal(32, ACT, &mut rng);
    let alpha = 0.3;
    let (_, grads) = sac.critic_loss_grad(&batch, next_eps.view(), alpha);
    for (k, grad) in grads.iter().enumerate() {
        let base = sac.clone();
        let mut probe = |i: usize, d: f64| {
            let mut s = base.clone();
            s.critics[k].params_mut()[i] += d;
            s.critic_loss_grad(&batch, next_eps.view(), alpha).0
        };
        assert!(fd_check(&mut probe, grad, &mut rng, 60) >= 30);
    }
}

#[test]
fn actor_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let sac = Sac::new(OBS, ACT, &small_config(), &mut rng);
    let batch = random_batch(&mut rng, 32);
    let eps = standard_normal(32, ACT, &mut rng);
    for alpha in [0.0, 0.2, 1.5] {
        let (_, grad, _) = sac.actor_loss_grad(batch.obs.view(), eps.view(), alpha);
        let mut probe = |i: usize, d: f64| {
            let mut s = sac.clone();
            s.actor.net_mut().params_mut()[i] += d;
            s.actor_loss_grad(batch.obs.view(), eps.view(), alpha).0
        };
        assert!(fd_check(&mut probe, &grad, &mut rng, 60) >= 30);
    }
}

#[test]
fn soft_update_is_a_convex_blend() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut sac = Sac::new(OBS, ACT, &small_config(), &mut rng);
    for c in &mut sac.critics {
        c.params_mut().iter_mut().for_each(|p| *p = rng.random_range(-2.0..2.0));
    }
    let before = sac.targets.clone();
    sac.soft_update_targets();
    let rho = small_config().soft_update;
    for k in 0..2 {
        for ((t, t0), o) in sac.targets[k].params().iter().zip(before[k].params()).zip(sac.critics[k].params()) {
            assert!((t - (rho * o + (1.0 - rho) * t0)).abs() <= 1e-12);
        }
    }
}

#[test]
fn zero_learning_rate_freezes_every_parameter() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = TrainerConfig {
        learning_rate: 0.0,
        ..small_config()
    };
    let mut sac = Sac::new(OBS, ACT, &cfg, &mut rng);
    let bits = |s: &Sac| -> Vec<u64> {
        let mut v: Vec<u64> = s.actor.net().params().iter().map(|p| p.to_bits()).collect();
        for n in s.critics.iter().chain(&s.targets) {
            v.extend(n.params().iter().map(|p| p.to_bits()));
        }
        v.push(s.log_alpha().to_bits());
        v
    };
    let before = bits(&sac);
    for _ in 0..25 {
        let batch = random_batch(&mut rng, 24);
        sac.update(&batch, cfg.lr_at(0), &mut rng).unwrap();
    }
    assert_eq!(bits(&sac), before);
}

#[test]
fn terminated_transitions_do_not_bootstrap() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sac = Sac::new(OBS, ACT, &small_config(), &mut rng);
    let mut batch = random_batch(&mut rng, 1);
    let eps = standard_normal(1, ACT, &mut rng);
    let loss = |b: &Batch| sac.critic_loss_grad(b, eps.view(), 0.2).0;
    let mut moved = batch.clone();
    moved.next_obs.mapv_inplace(|v| v + 1.0);

    batch.terminated[0] = 1.0;
    moved.terminated[0] = 1.0;
    assert_eq!(loss(&batch), loss(&moved));

    batch.terminated[0] = 0.0;
    moved.terminated[0] = 0.0;
    assert_ne!(loss(&batch), loss(&moved));
}

fn transition(k: usize, terminated: bool, truncated: bool) -> Transition {
    Transition {
        observation: vec![k as f64; OBS],
        action: vec![0.5; ACT],
        reward: k as f64,
        next_observation: vec![k as f64 + 0.5; OBS],
        terminated,
        truncated,
    }
}

#[test]
fn replay_ring_semantics() {
    let mut buf = ReplayBuffer::new(5, OBS, ACT);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(buf.sample(4, &mut rng).is_err());
    for k in 0..3 {
        buf.push(&transition(k, false, false)).unwrap();
    }
    assert_eq!(buf.len(), 3);
    for k in 3..6 {
        buf.push(&transition(k, false, false)).unwrap();
    }
    assert_eq!(buf.len(), 5);
    assert_eq!(buf.get(0).unwrap().reward, 1.0);
    assert_eq!(buf.get(4).unwrap().reward, 5.0);
    let a = buf.sample_indices(50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let b = buf.sample_indices(50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|&i| i < 5));
    let mut bad = transition(0, false, false);
    bad.action.pop();
    assert!(buf.push(&bad).is_err());
}

#[test]
fn replay_keeps_termination_and_drops_truncation() {
    let mut buf = ReplayBuffer::new(4, OBS, ACT);
    buf.push(&transition(1, true, false)).unwrap();
    buf.push(&transition(2, false, true)).unwrap();
    let batch = buf.sample(64, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    for r in 0..64 {
        let expect = if batch.rewards[r] == 1.0 { 1.0 } else { 0.0 };
        assert_eq!(batch.terminated[r], expect);
        assert_eq!(batch.next_obs[[r, 0]], batch.rewards[r] + 0.5);
    }
}

fn tiny_trainer(n_envs: usize) -> TrainerConfig {
    TrainerConfig {
        actor_hidden: vec![16],
        critic_hidden: vec![16],
        batch_size: 32,
        total_steps: 480,
        learning_starts: 160,
        log_interval: 160,
        n_envs,
        train_freq: 16,
        replay_capacity: 1000,
        eval_episodes: 2,
        seed: 17,
        ..TrainerConfig::desk()
    }
}

fn assets(env: &EnvConfig) -> Arc<EnvAssets> {
    EnvAssets::synthetic(env, &SynthParams::default()).unwrap()
}

fn run(trainer: TrainerConfig, env: EnvConfig, phase: TrainPhase, init: Option<PolicyCheckpoint>) -> TrainOutcome {
    let assets = assets(&env);
    train(TrainSetup {
        assets,
        env,
        trainer,
        phase,
        init,
        log_path: None,
    })
    .unwrap()
}

#[test]
fn seeded_runs_are_bit_exact() {
    for n in [1, 2] {
        let a = run(tiny_trainer(n), EnvConfig::default(), TrainPhase::Base, None);
        let b = run(tiny_trainer(n), EnvConfig::default(), TrainPhase::Base, None);
        assert_eq!(format!("{:?}", a.log), format!("{:?}", b.log));
        assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
        assert!(a.log.iter().any(|r| r.updates > 0));
    }
    let other = TrainerConfig {
        seed: 18,
        ..tiny_trainer(1)
    };
    let a = run(tiny_trainer(1), EnvConfig::default(), TrainPhase::Base, None);
    let c = run(other, EnvConfig::default(), TrainPhase::Base, None);
    assert_ne!(a.checkpoint.to_bytes(), c.checkpoint.to_bytes());
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let out = run(tiny_trainer(1), EnvConfig::default(), TrainPhase::Base, None);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("base.ckpt");
    out.checkpoint.save(&path).unwrap();
    let loaded = PolicyCheckpoint::load(&path).unwrap();
    assert_eq!(loaded, out.checkpoint);
    assert_eq!(loaded.to_bytes(), std::fs::read(&path).unwrap());
    assert_eq!(loaded.sac().unwrap(), out.checkpoint.sac().unwrap());
    assert_eq!(loaded.header.steps, 480);

    let mut bytes = out.checkpoint.to_bytes();
    let last = bytes.len() - 3;
    bytes[last] ^= 0x40;
    assert!(PolicyCheckpoint::from_bytes(&bytes).is_err());
    assert!(PolicyCheckpoint::from_bytes(b"NOTACKPT").is_err());
}

#[test]
fn phases_check_their_preconditions() {
    let setup = |phase, env: EnvConfig, init| TrainSetup {
        assets: assets(&env),
        env,
        trainer: tiny_trainer(1),
        phase,
        init,
        log_path: None,
    };
    let base = run(tiny_trainer(1), EnvConfig::default(), TrainPhase::Base, None).checkpoint;
    let r = train(setup(TrainPhase::ExoFinetune, EnvConfig::default(), Some(base.clone())));
    assert!(matches!(r, Err(TrainError::Config(_))));
    let hip = EnvConfig {
        device: "hip".into(),
        ..EnvConfig::default()
    };
    let r = train(setup(TrainPhase::ExoFinetune, hip, None));
    assert!(matches!(r, Err(TrainError::Config(_))));
    let r = train(setup(TrainPhase::WeaknessFinetune, EnvConfig::default(), Some(base)));
    assert!(matches!(r, Err(TrainError::Config(_))));
}

#[test]
fn exo_finetune_logs_assistance_from_the_first_row() {
    let base = run(tiny_trainer(1), EnvConfig::default(), TrainPhase::Base, None).checkpoint;
    let hip = EnvConfig {
        device: "hip".into(),
        ..EnvConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("metrics.csv");
    let out = train(TrainSetup {
        assets: assets(&hip),
        env: hip,
        trainer: tiny_trainer(1),
        phase: TrainPhase::ExoFinetune,
        init: Some(base),
        log_path: Some(log_path.clone()),
    })
    .unwrap();
    let first = &out.log[0];
    assert!(first.r_exo > 0.0);
    assert!(first.exo_torque.is_finite() && first.exo_torque > 0.0);
    assert!(out.log.iter().all(|r| r.exo_torque < r.exo_torque_max));
    assert_eq!(out.checkpoint.header.steps, 960);
    let text = std::fs::read_to_string(&log_path).unwrap();
    assert!(text.starts_with("step,episodes,mean_return"));
    assert_eq!(text.lines().count(), out.log.len() + 1);
}

#[test]
fn evaluation_contract() {
    let out = run(tiny_trainer(1), EnvConfig::default(), TrainPhase::Base, None);
    let ck = &out.checkpoint;
    let a = assets(&EnvConfig::default());
    let empty = evaluate(ck, a.clone(), 0, true, 1).unwrap();
    assert!(empty.traces.is_empty());
    assert_eq!(empty.summary, EvalSummary::default());

    let x = evaluate(ck, a.clone(), 3, true, 9).unwrap();
    let y = evaluate(ck, a.clone(), 3, true, 9).unwrap();
    assert_eq!(x, y);
    let mean = x.traces.iter().map(|t| t.total_reward()).sum::<f64>() / 3.0;
    assert!((x.summary.mean_reward - mean).abs() < 1e-12);
    assert!(x.traces.iter().all(|t| t.is_consistent()));
    let s1 = evaluate(ck, a.clone(), 2, false, 4).unwrap();
    let s2 = evaluate(ck, a, 2, false, 4).unwrap();
    assert_eq!(s1, s2);

    let faster = SynthParams {
        speed: 1.4,
        ..SynthParams::default()
    };
    let other = EnvAssets::synthetic(&EnvConfig::default(), &faster).unwrap();
    assert!(matches!(evaluate(ck, other, 1, true, 1), Err(TrainError::Fingerprint { .. })));
}

#[test]
fn trainer_config_round_trips_through_toml() {
    let cfg = TrainerConfig {
        entropy: EntropyMode::Fixed(0.1),
        ..TrainerConfig::desk()
    };
    let text = toml::to_string(&cfg).unwrap();
    assert_eq!(toml::from_str::<TrainerConfig>(&text).unwrap(), cfg);
    let partial: TrainerConfig = toml::from_str("total_steps = 10\nentropy = \"auto\"").unwrap();
    assert_eq!(partial.total_steps, 10);
    assert!(toml::from_str::<TrainerConfig>("bogus = 1").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soft_update_bounds(rho in 0.001f64..=1.0, pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..40)) {
        let mut target: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let online: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let before = target.clone();
        gaitlab_train::nn::soft_update(&mut target, &online, rho);
        for i in 0..target.len() {
            prop_assert!((target[i] - (rho * online[i] + (1.0 - rho) * before[i])).abs() <= 1e-12);
        }
    }

    #[test]
    fn schedule_is_monotone(a in 0usize..400_000, b in 0usize..400_000) {
        let cfg = TrainerConfig::desk();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(cfg.lr_at(hi) <= cfg.lr_at(lo));
        prop_assert!(cfg.lr_at(hi) >= 0.1 * cfg.learning_rate - 1e-18);
    }
}
