use std::sync::Arc;

use gaitlab_core::config::hip_device;
use gaitlab_core::env::*;
use gaitlab_core::layout::N_JOINTS;
use gaitlab_core::refmotion::synth::SynthParams;
use gaitlab_core::refmotion::ReferenceClip;
use gaitlab_core::reward::Phase;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assets(cfg: &EnvConfig) -> Arc<EnvAssets> {
    EnvAssets::synthetic(cfg, &SynthParams::default()).unwrap()
}

fn random_action(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn deviation(env: &GaitEnv) -> f64 {
    let t = env.reference_time();
    let r = env.clip().sample_at(t).root();
    let q = &env.state().q;
    ((q[0] - r[0]).powi(2) + (q[1] - r[1]).powi(2)).sqrt()
}

#[test]
fn spaces_have_published_sizes() {
    let cfg = EnvConfig::default();
    let env = GaitEnv::new(assets(&cfg), cfg).unwrap();
    assert_eq!(env.observation_dim(), 106);
    assert_eq!(env.action_dim(), 24);
}

#[test]
fn reset_is_seeded_and_matches_reference() {
    let cfg = EnvConfig::default();
    let a = assets(&cfg);
    let mut env = GaitEnv::new(a.clone(), cfg.clone()).unwrap();
    let o1 = env.reset(Some(42)).unwrap();
    let s1 = env.state().clone();
    let o2 = env.reset(Some(42)).unwrap();
    assert_eq!(o1, o2);
    assert_eq!(&s1, env.state());
    assert_eq!(o1.len(), 106);
    let reference = env.reference_now();
    for i in 2..9 {
        assert!((env.state().q[i] - reference.q[i]).abs() < 1e-9);
    }
    // observation blocks pass muscle state through
    let m = env.muscle_states();
    for i in 0..18 {
        assert_eq!(o1[i], m[i].fiber_length);
        assert_eq!(o1[36 + i], m[i].activation);
        assert_eq!(m[i].activation, 0.05);
    }
    let bw = env.model().weight();
    let grf = env.model().static_vertical_grf(&env.state().q);
    assert!((grf - bw).abs() < 1.0);
}

#[test]
fn reset_height_adjustment_is_small_when_feet_touch() {
    let cfg = EnvConfig::default();
    let a = assets(&cfg);
    let mut clip: ReferenceClip = a.clip.clone();
    let model = &a.model;
    for f in &mut clip.frames {
        let low = model.contact_points(&f.q).iter().map(|(_, p)| p[1]).fold(f64::INFINITY, f64::min);
        f.q[1] -= low;
    }
    let touched = EnvAssets::new(&cfg, clip.clone()).unwrap();
    let mut env = GaitEnv::new(touched, cfg).unwrap();
    for frame in (0..clip.len()).step_by(11) {
        env.reset_at(frame).unwrap();
        let dy = env.state().q[1] - clip.frames[frame].q[1];
        assert!(dy.abs() < 0.005, "frame {frame}: {dy}");
    }
}

#[test]
fn future_block_vanishes_on_a_still_clip() {
    let cfg = EnvConfig::default();
    let a = assets(&cfg);
    let mut clip = a.clip.clone();
    let still = clip.frames[0].clone();
    for f in &mut clip.frames {
        *f = still.clone();
        f.qdot = [0.0; 9];
    }
    let mut env = GaitEnv::new(EnvAssets::new(&cfg, clip).unwrap(), cfg).unwrap();
    let obs = env.reset_at(5).unwrap();
    assert!(obs[71..].iter().all(|v| *v == 0.0));
}

#[test]
fn termination_fires_at_the_first_excursion() {
    let cfg = EnvConfig::default();
    let mut env = GaitEnv::new(assets(&cfg), cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for ep in 0..12 {
        env.reset(Some(ep)).unwrap();
        // alternate random, limp and fully contracted policies
        let mode = ep % 3;
        loop {
            let action = match mode {
                0 => random_action(&mut rng, 24),
                1 => vec![-1.0; 24],
                _ => vec![1.0; 24],
            };
            let out = env.step(&action).unwrap();
            assert!(out.diagnostic.is_none());
            let d = deviation(&env);
            assert!((d - out.root_deviation).abs() < 1e-12);
            assert_eq!(out.terminated, d > 0.4, "step {}: deviation {d}", env.steps());
            if out.terminated || out.truncated {
                break;
            }
        }
        assert!(matches!(env.step(&[0.0; 24]), Err(EnvError::EpisodeOver)));
    }
}

#[test]
fn scripted_limits_never_fire_early() {
    let l = EpisodeLimits {
        max_steps: 250,
        radius: 0.4,
    };
    let script = [0.0, 0.39, 0.4, 0.399_999_999, 0.4, 0.400_000_000_001];
    for (k, d) in script.iter().enumerate() {
        let (term, trunc) = l.check(k + 1, *d);
        assert_eq!(term, k == script.len() - 1);
        assert!(!trunc);
    }
}

#[test]
fn truncation_at_exactly_the_cap() {
    let cfg = EnvConfig {
        termination_radius: 1e9,
        ..EnvConfig::default()
    };
    let mut env = GaitEnv::new(assets(&cfg), cfg).unwrap();
    env.reset(Some(1)).unwrap();
    for k in 1..=250 {
        let out = env.step(&[-1.0; 24]).unwrap();
        assert!(out.diagnostic.is_none(), "{:?}", out.diagnostic);
        assert!(!out.terminated);
        assert_eq!(out.truncated, k == 250, "step {k}");
    }
    assert!((env.time() - 10.0).abs() < 1e-9);
    assert!(!env.is_live());
}

fn check_exo_sequence(exo: &mut ExoActuator, actions: &[Vec<f64>]) -> Result<(), String> {
    let alpha = exo.alpha();
    let max = *exo.torque_max();
    let mut prev_cmd = [0.0; N_JOINTS];
    let mut prev_out = [0.0; N_JOINTS];
    for a in actions {
        let out = *exo.update(a);
        let cmd = *exo.command();
        for j in 0..N_JOINTS {
            if (cmd[j] - prev_cmd[j]).abs() > max[j] + 1e-9 {
                return Err(format!("rate limit broken on joint {j}"));
            }
            let expected = prev_out[j] + alpha * (cmd[j] - prev_out[j]);
            if (out[j] - expected).abs() > 1e-12 || out[j].abs() > max[j] + 1e-9 {
                return Err(format!("filter broken on joint {j}"));
            }
            // first-order step bound
            if (out[j] - prev_out[j]).abs() > alpha * 2.0 * max[j] + 1e-9 {
                return Err(format!("output jump on joint {j}"));
            }
        }
        prev_cmd = cmd;
        prev_out = out;
    }
    Ok(())
}

#[test]
fn exo_pipeline_invariants_on_random_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for (device, mass) in [(hip_device(), 77.0), (gaitlab_core::config::ankle_device(), 79.0)] {
        for _ in 0..500 {
            let mut exo = ExoActuator::new(&device, mass, 0.04);
            let len = rng.random_range(1..80);
            let seq: Vec<Vec<f64>> = (0..len)
                .map(|_| (0..N_JOINTS).map(|_| rng.random_range(-1.5..1.5)).collect())
                .collect();
            check_exo_sequence(&mut exo, &seq).unwrap();
        }
    }
}

#[test]
fn exo_channels_inside_the_environment() {
    let cfg = EnvConfig {
        device: "hip".into(),
        phase: Phase::Finetune,
        ..EnvConfig::default()
    };
    let a = assets(&cfg);
    let mut env = GaitEnv::new(a.clone(), cfg.clone()).unwrap();
    let tmax = env.model().total_mass();
    assert_eq!(env.exo().torque_max()[0], tmax);
    // zero command keeps zero torque
    env.reset(Some(5)).unwrap();
    for _ in 0..5 {
        let out = env.step(&[0.0; 24]).unwrap();
        assert_eq!(*env.exo_torques(), [0.0; N_JOINTS]);
        assert_eq!(out.reward.exo, 0.0);
    }
    // saturated command: first-order response, nonzero usage term
    env.reset(Some(5)).unwrap();
    let mut action = vec![0.0; 24];
    action[18] = 1.0;
    action[21] = -1.0;
    let out = env.step(&action).unwrap();
    let alpha = lowpass_alpha(1.0, 0.04);
    assert!((env.exo_torques()[0] - alpha * tmax).abs() < 1e-9);
    assert!((env.exo_torques()[3] + alpha * tmax).abs() < 1e-9);
    assert!((out.reward.exo - alpha).abs() < 1e-12);

    // base phase ignores the channels
    let base = EnvConfig {
        phase: Phase::Base,
        ..cfg
    };
    let mut env = GaitEnv::new(a, base).unwrap();
    env.reset(Some(5)).unwrap();
    env.step(&action).unwrap();
    assert_eq!(*env.exo_torques(), [0.0; N_JOINTS]);
}

#[test]
fn weakness_cap_is_never_exceeded() {
    let cfg = EnvConfig {
        weakness: Some("plantarflexor-weak-left".into()),
        ..EnvConfig::default()
    };
    let mut env = GaitEnv::new(assets(&cfg), cfg).unwrap();
    let weak = env.mask().weakened();
    assert_eq!(weak.len(), 2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for ep in 0..6 {
        env.reset(Some(ep)).unwrap();
        loop {
            let mut a = random_action(&mut rng, 24);
            if ep % 2 == 0 {
                a.iter_mut().for_each(|v| *v = 1.0);
            }
            let out = env.step(&a).unwrap();
            for &(i, _) in &weak {
                worst = worst.max(env.excitation()[i]).max(env.muscle_states()[i].activation);
            }
            if out.terminated || out.truncated {
                break;
            }
        }
    }
    assert!(worst <= 0.05 + 1e-12, "{worst}");
}

#[test]
fn identity_mask_changes_nothing() {
    let cfg = EnvConfig::default();
    let a = assets(&cfg);
    let mut plain = GaitEnv::new(a.clone(), cfg.clone()).unwrap();
    let mut masked = GaitEnv::new(a.clone(), cfg).unwrap();
    masked.apply_weakness(WeaknessMask::identity(18)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    assert_eq!(plain.reset(Some(8)).unwrap(), masked.reset(Some(8)).unwrap());
    for _ in 0..10 {
        let act = random_action(&mut rng, 24);
        let (x, y) = (plain.step(&act).unwrap(), masked.step(&act).unwrap());
        assert_eq!(x, y);
        if x.terminated {
            break;
        }
    }
}

#[test]
fn records_form_a_consistent_trace() {
    let cfg = EnvConfig::default();
    let mut env = GaitEnv::new(assets(&cfg), cfg).unwrap();
    env.reset(Some(11)).unwrap();
    let mut trace = gaitlab_core::trace::EpisodeTrace {
        meta: env.trace_meta(),
        steps: Vec::new(),
        terminated: false,
        truncated: false,
    };
    let mut total = 0.0;
    for _ in 0..8 {
        let out = env.step(&[0.0; 24]).unwrap();
        total += out.reward.total;
        trace.steps.push(env.record());
        if out.terminated {
            break;
        }
    }
    assert!(trace.is_consistent());
    assert_eq!(trace.total_reward(), total);
    assert_eq!(trace.meta.fingerprint, env.fingerprint());
    let json = serde_json::to_string(&trace).unwrap();
    let back: gaitlab_core::trace::EpisodeTrace = serde_json::from_str(&json).unwrap();
    assert_eq!(back, trace);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn decoded_excitations_respect_caps(actions in prop::collection::vec(-2.0f64..2.0, 18), cap in 0.01f64..=1.0) {
        let set = gaitlab_core::config::default_muscles();
        let caps = [("soleus_l".to_string(), cap), ("iliopsoas_r".to_string(), cap)].into_iter().collect();
        let mask = WeaknessMask::from_caps(&set, &caps).unwrap();
        let mut out = vec![0.0; 18];
        mask.decode(&actions, &mut out);
        for (i, e) in out.iter().enumerate() {
            prop_assert!((0.0..=mask.caps()[i]).contains(e));
        }
    }
}
