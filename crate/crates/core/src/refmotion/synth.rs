//! Synthetic periodic walking clip for the planar walker.
//!
//! Joint trajectories are smooth periodic fits through textbook sagittal
//! gait keyframes (right leg half a cycle behind the left), with the hip
//! excursion scaled so a non-slipping stance foot matches the target speed.
//! The root moves forward at constant speed, its (smoothed) height keeps the
//! lowest contact point on the ground, and joint moments come from inverse
//! dynamics with the ground reaction shared between the feet by height.

use std::f64::consts::TAU;

use super::{default_pairs, zero_lag_lowpass, ClipMeta, RefError, RefFrame, ReferenceClip, N_LANDMARKS};
use crate::dynamics::Model;
use crate::layout::{JointKind, FOOT_SEGMENTS, N_DOF, N_JOINTS, ROOT_DOFS};

const HARMONICS: usize = 8;
/// Toe-off phase of each leg; the other leg strikes at 0.5.
const TOE_OFF: f64 = 0.6;
/// Hz
const ROOT_HEIGHT_CUTOFF: f64 = 4.0;
/// Feet count as loaded above this vertical GRF, body weights.
pub const CONTACT_THRESHOLD: f64 = 0.05;

const HIP_KEYS: [(f64, f64); 7] = [
    (0.0, 30.0),
    (0.12, 26.0),
    (0.3, 8.0),
    (0.5, -10.0),
    (0.6, -4.0),
    (0.72, 20.0),
    (0.87, 33.0),
];
const KNEE_KEYS: [(f64, f64); 8] = [
    (0.0, 4.0),
    (0.15, 18.0),
    (0.4, 4.0),
    (0.6, 38.0),
    (0.72, 62.0),
    (0.8, 44.0),
    (0.87, 20.0),
    (0.95, 4.0),
];
const ANKLE_KEYS: [(f64, f64); 7] = [
    (0.0, 0.0),
    (0.07, -6.0),
    (0.45, 10.0),
    (0.6, -15.0),
    (0.68, -6.0),
    (0.76, 2.0),
    (0.9, 2.0),
];

/// Periodic Catmull–Rom interpolation through `(phase, value)` keys.
fn catmull_rom(keys: &[(f64, f64)], phase: f64) -> f64 {
    let n = keys.len();
    let p = phase.rem_euclid(1.0);
    let key = |i: isize| {
        let k = i.rem_euclid(n as isize) as usize;
        let wraps = i.div_euclid(n as isize) as f64;
        (keys[k].0 + wraps, keys[k].1)
    };
    let mut i = (n - 1) as isize;
    for (k, kv) in keys.iter().enumerate() {
        if kv.0 > p {
            i = k as isize - 1;
            break;
        }
    }
    let (t0, y0) = key(i - 1);
    let (t1, y1) = key(i);
    let (t2, y2) = key(i + 1);
    let (t3, y3) = key(i + 2);
    let m1 = (y2 - y0) / (t2 - t0);
    let m2 = (y3 - y1) / (t3 - t1);
    let h = t2 - t1;
    let s = (p - t1) / h;
    let (s2, s3) = (s * s, s * s * s);
    (2.0 * s3 - 3.0 * s2 + 1.0) * y1 + (s3 - 2.0 * s2 + s) * h * m1 + (-2.0 * s3 + 3.0 * s2) * y2 + (s3 - s2) * h * m2
}

/// Truncated Fourier series in gait phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Fourier {
    pub mean: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl Fourier {
    fn fit(f: impl Fn(f64) -> f64, harmonics: usize) -> Self {
        let m = 512;
        let samples: Vec<f64> = (0..m).map(|i| f(i as f64 / m as f64)).collect();
        let mean = samples.iter().sum::<f64>() / m as f64;
        let coef = |k: usize, g: fn(f64) -> f64| {
            2.0 / m as f64 * samples.iter().enumerate().map(|(i, v)| v * g(TAU * (k * i) as f64 / m as f64)).sum::<f64>()
        };
        Self {
            mean,
            cos: (1..=harmonics).map(|k| coef(k, f64::cos)).collect(),
            sin: (1..=harmonics).map(|k| coef(k, f64::sin)).collect(),
        }
    }

    pub fn value(&self, phase: f64) -> f64 {
        let mut v = self.mean;
        for k in 0..self.cos.len() {
            let w = TAU * (k + 1) as f64 * phase;
            v += self.cos[k] * w.cos() + self.sin[k] * w.sin();
        }
        v
    }

    /// Derivative with respect to phase.
    pub fn slope(&self, phase: f64) -> f64 {
        let mut v = 0.0;
        for k in 0..self.cos.len() {
            let c = TAU * (k + 1) as f64;
            let w = c * phase;
            v += c * (-self.cos[k] * w.sin() + self.sin[k] * w.cos());
        }
        v
    }

    fn scaled(&self, s: f64) -> Self {
        Self {
            mean: self.mean,
            cos: self.cos.iter().map(|c| c * s).collect(),
            sin: self.sin.iter().map(|c| c * s).collect(),
        }
    }
}

/// Joint-angle generators of the synthetic gait, phase 0 at left heel strike.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitPattern {
    pub hip: Fourier,
    pub knee: Fourier,
    pub ankle: Fourier,
    /// Mean root pitch, rad.
    pub pitch_mean: f64,
    /// Pitch oscillation amplitude at twice the stride frequency, rad.
    pub pitch_amplitude: f64,
}

impl GaitPattern {
    /// Keyframe gait with the hip excursion scaled about its mean.
    pub fn standard(hip_scale: f64) -> Self {
        let deg = |keys: &'static [(f64, f64)]| move |p: f64| catmull_rom(keys, p).to_radians();
        Self {
            hip: Fourier::fit(deg(&HIP_KEYS), HARMONICS).scaled(hip_scale),
            knee: Fourier::fit(deg(&KNEE_KEYS), HARMONICS),
            ankle: Fourier::fit(deg(&ANKLE_KEYS), HARMONICS),
            pitch_mean: -0.17,
            pitch_amplitude: 0.015,
        }
    }

    pub fn curve(&self, kind: JointKind) -> &Fourier {
        match kind {
            JointKind::Hip => &self.hip,
            JointKind::Knee => &self.knee,
            JointKind::Ankle => &self.ankle,
        }
    }

    /// Joint angle of one leg at its own phase, rad.
    pub fn angle(&self, kind: JointKind, phase: f64) -> f64 {
        self.curve(kind).value(phase)
    }

    fn pose(&self, phase: f64) -> ([f64; N_DOF], [f64; N_DOF]) {
        let mut q = [0.0; N_DOF];
        let mut dq = [0.0; N_DOF];
        q[2] = self.pitch_mean + self.pitch_amplitude * (2.0 * TAU * phase).cos();
        dq[2] = -2.0 * TAU * self.pitch_amplitude * (2.0 * TAU * phase).sin();
        for (side, offset) in [(0usize, 0.0), (1, 0.5)] {
            for (k, kind) in JointKind::ALL.iter().enumerate() {
                let c = self.curve(*kind);
                q[ROOT_DOFS + 3 * side + k] = c.value(phase + offset);
                dq[ROOT_DOFS + 3 * side + k] = c.slope(phase + offset);
            }
        }
        (q, dq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub name: String,
    /// Target average forward speed, m/s.
    pub speed: f64,
    /// Stride (gait cycle) duration, s.
    pub stride_period: f64,
    pub cycles: usize,
    /// Hz
    pub sample_rate: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            name: "synthetic-walk".into(),
            speed: 1.2,
            stride_period: 1.1,
            cycles: 12,
            sample_rate: 100.0,
        }
    }
}

struct Cycle {
    q: Vec<[f64; N_DOF]>,
    qdot: Vec<[f64; N_DOF]>,
    advance: f64,
}

/// Low-pass filter of one period of a periodic signal.
fn periodic_lowpass(x: &[f64], fs: f64, cutoff: f64) -> Result<Vec<f64>, RefError> {
    let n = x.len();
    let tiled: Vec<f64> = x.iter().chain(x).chain(x).copied().collect();
    let y = zero_lag_lowpass(&tiled, fs, cutoff)?;
    Ok(y[n..2 * n].to_vec())
}

fn periodic_derivative(x: &[f64], fs: f64) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|i| (x[(i + 1) % n] - x[(i + n - 1) % n]) * fs / 2.0).collect()
}

fn lowest_points(model: &Model, q: &[f64]) -> [(f64, usize); 2] {
    let mut low = [(f64::INFINITY, 0usize); 2];
    for (k, (g, p)) in model.contact_points(q).into_iter().enumerate() {
        if p[1] < low[g].0 {
            low[g] = (p[1], k);
        }
    }
    low
}

/// Fraction of the ground load on the left foot; the load moves smoothly
/// across during each double-support window.
fn left_load_share(phase: f64) -> f64 {
    let p = phase.rem_euclid(1.0);
    let window = TOE_OFF - 0.5;
    let ramp = |x: f64| {
        let x = x.clamp(0.0, 1.0);
        x * x * (3.0 - 2.0 * x)
    };
    if p < window {
        ramp(p / window)
    } else if p < 0.5 {
        1.0
    } else if p < TOE_OFF {
        1.0 - ramp((p - 0.5) / window)
    } else {
        0.0
    }
}

/// Mean forward speed at which the lowest contact sphere would not slip.
fn no_slip_speed(model: &Model, pattern: &GaitPattern, n: usize, fs: f64) -> f64 {
    let period = n as f64 / fs;
    let mut sum = 0.0;
    for i in 0..n {
        let (q, mut dq) = pattern.pose(i as f64 / n as f64);
        dq.iter_mut().for_each(|v| *v /= period);
        let low = lowest_points(model, &q);
        let stance = if low[0].0 <= low[1].0 { low[0].1 } else { low[1].1 };
        sum -= model.contact_point_velocities(&q, &dq)[stance].1[0];
    }
    sum / n as f64
}

fn build_cycle(model: &Model, pattern: &GaitPattern, n: usize, fs: f64, speed: f64) -> Result<Cycle, RefError> {
    let period = n as f64 / fs;
    let mut q = Vec::with_capacity(n);
    let mut qdot = Vec::with_capacity(n);
    let mut height = Vec::with_capacity(n);
    for i in 0..n {
        let (mut qi, mut dqi) = pattern.pose(i as f64 / n as f64);
        dqi.iter_mut().for_each(|v| *v /= period);
        let low = lowest_points(model, &qi);
        height.push(-low[0].0.min(low[1].0));
        qi[0] = speed * i as f64 / fs;
        dqi[0] = speed;
        q.push(qi);
        qdot.push(dqi);
    }
    let y = periodic_lowpass(&height, fs, ROOT_HEIGHT_CUTOFF)?;
    let ydot = periodic_derivative(&y, fs);
    for i in 0..n {
        q[i][1] = y[i];
        qdot[i][1] = ydot[i];
    }
    Ok(Cycle {
        q,
        qdot,
        advance: speed * period,
    })
}

/// Generates the clip and returns the joint-angle generators used.
pub fn synthesize(model: &Model, params: &SynthParams) -> Result<(ReferenceClip, GaitPattern), RefError> {
    if !(params.speed > 0.0 && params.stride_period > 0.0 && params.sample_rate > 0.0) || params.cycles < 2 {
        return Err(RefError::InvalidArgument(
            "speed, stride period and sample rate must be positive; at least two cycles".into(),
        ));
    }
    let fs = params.sample_rate;
    let n = (params.stride_period * fs).round() as usize;
    let speed_for = |s: f64| no_slip_speed(model, &GaitPattern::standard(s), n, fs);

    let (mut lo, mut hi) = (0.2, 2.5);
    if speed_for(lo) > params.speed || speed_for(hi) < params.speed {
        return Err(RefError::InvalidArgument(format!(
            "speed {} m/s is not reachable at stride period {} s",
            params.speed, params.stride_period
        )));
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if speed_for(mid) < params.speed {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let pattern = GaitPattern::standard(0.5 * (lo + hi));
    let cycle = build_cycle(model, &pattern, n, fs, params.speed)?;

    // accelerations: periodic differences, smoothed
    let mut qddot = vec![[0.0; N_DOF]; n];
    for d in 0..N_DOF {
        let v: Vec<f64> = cycle.qdot.iter().map(|f| f[d]).collect();
        let a = periodic_lowpass(&periodic_derivative(&v, fs), fs, 8.0)?;
        for i in 0..n {
            qddot[i][d] = a[i];
        }
    }

    let mass = model.total_mass();
    let weight = model.weight();
    let mut one_cycle = Vec::with_capacity(n);
    for i in 0..n {
        let q = &cycle.q[i];
        let qd = &cycle.qdot[i];
        let demand = model.inverse_dynamics(q, qd, &qddot[i]);
        let share_l = left_load_share(i as f64 / n as f64);
        let mut joint = [0.0; N_JOINTS];
        joint.copy_from_slice(&demand[ROOT_DOFS..]);
        let mut grf = [[0.0; 2]; 2];
        let feet = model.contact_points(q);
        for (side, share) in [(0usize, share_l), (1, 1.0 - share_l)] {
            let f = [share * demand[0], (share * demand[1]).max(0.0)];
            if f[1] <= 1e-9 * weight {
                continue;
            }
            // centre of pressure reproducing this foot's share of the root
            // moment, kept under the foot; the remainder is a root residual
            let (heel, toe) = feet
                .iter()
                .filter(|(g, _)| *g == side)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, p)| (a.min(p[0]), b.max(p[0])));
            let cop = (q[0] + (share * demand[2] - f[0] * q[1]) / f[1]).clamp(heel, toe);
            let gen = model.point_force_generalized(q, FOOT_SEGMENTS[side], [cop, 0.0], f);
            for j in 0..N_JOINTS {
                joint[j] -= gen[ROOT_DOFS + j];
            }
            grf[side] = [f[0] / weight, f[1] / weight];
        }
        let lm = model.landmark_motion(q, qd);
        let mut landmarks = [[0.0; 2]; N_LANDMARKS];
        for (k, l) in lm.iter().take(N_LANDMARKS).enumerate() {
            landmarks[k] = l.0;
        }
        one_cycle.push(RefFrame {
            q: *q,
            qdot: *qd,
            moments: joint.map(|m| m / mass),
            landmarks,
            contact: Some([grf[0][1] >= CONTACT_THRESHOLD, grf[1][1] >= CONTACT_THRESHOLD]),
            grf: Some(grf),
        });
    }

    let mut frames = Vec::with_capacity(n * params.cycles);
    for c in 0..params.cycles {
        for f in &one_cycle {
            let mut f = f.clone();
            f.shift_x(c as f64 * cycle.advance);
            frames.push(f);
        }
    }
    let clip = ReferenceClip {
        sample_rate: fs,
        frames,
        meta: ClipMeta {
            name: params.name.clone(),
            speed: params.speed,
            subject_mass: mass,
            mirrored: false,
            treadmill: false,
            pairs: default_pairs(),
        },
    };
    clip.validate()?;
    Ok((clip, pattern))
}

/// Synthetic overground walking clip at the requested speed.
pub fn synthetic_clip(model: &Model, params: &SynthParams) -> Result<ReferenceClip, RefError> {
    synthesize(model, params).map(|(c, _)| c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catmull_rom_hits_keys() {
        for (p, v) in HIP_KEYS {
            assert!((catmull_rom(&HIP_KEYS, p) - v).abs() < 1e-12);
        }
        assert!((catmull_rom(&HIP_KEYS, 1.0) - catmull_rom(&HIP_KEYS, 0.0)).abs() < 1e-12);
    }

    #[test]
    fn fourier_slope_matches_difference() {
        let p = GaitPattern::standard(1.0);
        let h = 1e-6;
        for &x in &[0.1, 0.45, 0.8] {
            let fd = (p.knee.value(x + h) - p.knee.value(x - h)) / (2.0 * h);
            assert!((fd - p.knee.slope(x)).abs() < 1e-5);
        }
    }
}
