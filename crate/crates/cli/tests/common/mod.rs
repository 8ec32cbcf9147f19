#![allow(dead_code)]

use gaitlab_core::config::default_skeleton;
use gaitlab_core::dynamics::{build_model, ExoDeviceSpec, ModelState};
use gaitlab_core::metabolics::MetabolicRates;
use gaitlab_core::refmotion::synth::{synthetic_clip, SynthParams};
use gaitlab_core::refmotion::ReferenceClip;
use gaitlab_core::reward::{Phase, RewardBreakdown};
use gaitlab_core::trace::{EpisodeTrace, StepRecord, TraceMeta};

pub const MASS: f64 = 75.0;
pub const G: f64 = 9.81;
pub const N_MUSCLES: usize = 18;

/// Everything a synthetic step carries, in trace units (rad, N·m, N).
#[derive(Debug, Clone, Default)]
pub struct Sample {
    pub angles: [f64; 6],
    pub moments: [f64; 6],
    pub grf_y: [f64; 2],
    pub exo: [f64; 6],
}

pub fn meta(rate: f64, device: &str) -> TraceMeta {
    TraceMeta {
        fingerprint: "test-fingerprint".into(),
        speed: 1.2,
        phase: Phase::Base,
        device: device.into(),
        mask: Vec::new(),
        model_mass: MASS,
        control_rate: rate,
        clip_start: 0.0,
    }
}

fn rates(i: usize) -> Vec<MetabolicRates> {
    (0..N_MUSCLES)
        .map(|m| {
            let total = 10.0 + (m as f64) + ((i * 7 + m) % 5) as f64;
            MetabolicRates {
                activation_maintenance: total * 0.5,
                shortening_lengthening: total * 0.3,
                work: total * 0.2,
                total,
                muscle_mass: 0.2 + 0.01 * m as f64,
            }
        })
        .collect()
}

/// `n` records at the meta's control rate; `f` receives the record time.
pub fn build(meta: TraceMeta, n: usize, f: impl Fn(f64) -> Sample) -> EpisodeTrace {
    let dt = 1.0 / meta.control_rate;
    let steps = (0..n)
        .map(|i| {
            let time = (i + 1) as f64 * dt;
            let s = f(time);
            let mut q = vec![0.0; 9];
            q[3..].copy_from_slice(&s.angles);
            StepRecord {
                time,
                state: ModelState {
                    q,
                    qdot: vec![0.0; 9],
                    grf: vec![[0.0, s.grf_y[0]], [0.0, s.grf_y[1]]],
                    landmarks: vec![[0.0; 2]; 3],
                    joint_moments: s.moments.to_vec(),
                },
                excitation: vec![0.1; N_MUSCLES],
                activation: vec![0.1; N_MUSCLES],
                exo_torque: s.exo.to_vec(),
                reward: RewardBreakdown {
                    total: 0.5,
                    ..Default::default()
                },
                metabolics: rates(i),
            }
        })
        .collect();
    EpisodeTrace {
        meta,
        steps,
        terminated: false,
        truncated: true,
    }
}

pub fn clip() -> ReferenceClip {
    let model = build_model(&default_skeleton(), &ExoDeviceSpec::none()).unwrap();
    synthetic_clip(&model, &SynthParams::default()).unwrap()
}

/// The clip replayed as if simulated perfectly, with `edit` applied to
/// each sample.
pub fn reference_trace(clip: &ReferenceClip, rate: f64, edit: impl Fn(&mut Sample)) -> EpisodeTrace {
    let n = (clip.period() * rate).floor() as usize - 1;
    build(meta(rate, "none"), n, |t| {
        let f = clip.sample_at(t);
        let grf = f.grf.unwrap();
        let mut s = Sample {
            angles: f.q[3..].try_into().unwrap(),
            moments: f.moments.map(|m| m * MASS),
            grf_y: [grf[0][1] * MASS * G, grf[1][1] * MASS * G],
            exo: [0.0; 6],
        };
        edit(&mut s);
        s
    })
}

/// Phase in [0, 1) of a 1 s gait cycle, offset by `shift` cycles.
pub fn phase(t: f64, shift: f64) -> f64 {
    let p = t - shift;
    p - p.floor()
}

/// Stance for the first 60% of each side's cycle, the right side half a
/// cycle behind the left.
pub fn analytic_grf(t: f64) -> [f64; 2] {
    let w = MASS * G;
    let stance = |p: f64| if p < 0.6 { w } else { 0.0 };
    [stance(phase(t, 0.0)), stance(phase(t, 0.5))]
}
