//! Reference motion: clip type, treadmill→overground conversion, mirroring,
//! filtering, gait events and cycle normalization.

mod events;
mod filter;
pub mod io;
pub mod synth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{mirror_joints, N_ANGLES, N_DOF, N_JOINTS, ROOT_DOFS};

pub use events::{cycle_normalize, detect_gait_events, CycleAverage, CycleSelection, EventPolarity, GaitEvents};
pub use filter::{zero_lag_lowpass, Biquad, CUTOFF_CORRECTION, MIN_FILTER_LENGTH};

/// Landmarks carried by a clip: left foot, right foot, head.
pub const N_LANDMARKS: usize = 3;

#[derive(Debug, Error)]
pub enum RefError {
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("clip format error: {0}")]
    Format(String),
    #[error("lateral channel '{0}' has no declared left/right pair")]
    UnpairedChannel(String),
    #[error("frame timestamps are not uniformly spaced (frame {0})")]
    NonUniform(usize),
    #[error("no stance interval of at least {0} frames")]
    NoStance(usize),
    #[error("no complete gait cycle detected on side(s): {0}")]
    ZeroCycles(String),
    #[error("{needed} gait cycles requested but only {found} available")]
    InsufficientCycles { found: usize, needed: usize },
    #[error("signal of {len} samples is too short (need more than {min})")]
    TooShort { len: usize, min: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// One sample of a reference clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefFrame {
    /// Generalized coordinates (root x/y m, pitch and joints rad).
    pub q: [f64; N_DOF],
    pub qdot: [f64; N_DOF],
    /// Net joint moments, N·m/kg of subject mass.
    pub moments: [f64; N_JOINTS],
    /// Left foot, right foot, head; world frame, m.
    pub landmarks: [[f64; 2]; N_LANDMARKS],
    pub contact: Option<[bool; 2]>,
    /// Per-foot ground reaction `[fx, fy]`, body weights.
    pub grf: Option<[[f64; 2]; 2]>,
}

impl RefFrame {
    /// Root pitch followed by the six joint angles.
    pub fn angles(&self) -> [f64; N_ANGLES] {
        let mut out = [0.0; N_ANGLES];
        out.copy_from_slice(&self.q[ROOT_DOFS - 1..]);
        out
    }

    pub fn angle_rates(&self) -> [f64; N_ANGLES] {
        let mut out = [0.0; N_ANGLES];
        out.copy_from_slice(&self.qdot[ROOT_DOFS - 1..]);
        out
    }

    pub fn joints(&self) -> [f64; N_JOINTS] {
        let mut out = [0.0; N_JOINTS];
        out.copy_from_slice(&self.q[ROOT_DOFS..]);
        out
    }

    pub fn root(&self) -> [f64; 2] {
        [self.q[0], self.q[1]]
    }

    fn lerp(&self, other: &RefFrame, w: f64) -> RefFrame {
        let mix = |a: f64, b: f64| a + w * (b - a);
        let mut out = self.clone();
        for i in 0..N_DOF {
            out.q[i] = mix(self.q[i], other.q[i]);
            out.qdot[i] = mix(self.qdot[i], other.qdot[i]);
        }
        for i in 0..N_JOINTS {
            out.moments[i] = mix(self.moments[i], other.moments[i]);
        }
        for l in 0..N_LANDMARKS {
            for c in 0..2 {
                out.landmarks[l][c] = mix(self.landmarks[l][c], other.landmarks[l][c]);
            }
        }
        if let (Some(a), Some(b)) = (self.grf, other.grf) {
            let mut g = a;
            for f in 0..2 {
                for c in 0..2 {
                    g[f][c] = mix(a[f][c], b[f][c]);
                }
            }
            out.grf = Some(g);
        }
        if w >= 0.5 {
            out.contact = other.contact;
        }
        out
    }

    fn shift_x(&mut self, dx: f64) {
        self.q[0] += dx;
        for l in &mut self.landmarks {
            l[0] += dx;
        }
    }

    fn mirrored(&self) -> RefFrame {
        let swap_joints = |v: &[f64]| {
            let mut j = [0.0; N_JOINTS];
            j.copy_from_slice(&v[ROOT_DOFS..]);
            mirror_joints(&j)
        };
        let mut out = self.clone();
        out.q[ROOT_DOFS..].copy_from_slice(&swap_joints(&self.q));
        out.qdot[ROOT_DOFS..].copy_from_slice(&swap_joints(&self.qdot));
        out.moments = mirror_joints(&self.moments);
        out.landmarks.swap(0, 1);
        out.contact = self.contact.map(|[l, r]| [r, l]);
        out.grf = self.grf.map(|[l, r]| [r, l]);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub name: String,
    /// Nominal walking speed, m/s.
    pub speed: f64,
    /// kg
    pub subject_mass: f64,
    pub mirrored: bool,
    /// True while positions are still in the treadmill frame.
    pub treadmill: bool,
    /// Declared left/right channel pairs (base names such as `hip_l`).
    pub pairs: Vec<[String; 2]>,
}

/// Base names of every lateral channel a clip can carry.
pub fn default_pairs() -> Vec<[String; 2]> {
    ["hip", "knee", "ankle", "foot", "contact", "grf"]
        .iter()
        .map(|b| [format!("{b}_l"), format!("{b}_r")])
        .collect()
}

/// Uniformly sampled reference motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceClip {
    /// Hz
    pub sample_rate: f64,
    pub frames: Vec<RefFrame>,
    pub meta: ClipMeta,
}

impl ReferenceClip {
    pub fn validate(&self) -> Result<(), RefError> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(RefError::Format("sample rate must be positive".into()));
        }
        if self.frames.len() < 2 {
            return Err(RefError::Format("a clip needs at least two frames".into()));
        }
        for (i, f) in self.frames.iter().enumerate() {
            let finite = f.q.iter().chain(&f.qdot).chain(&f.moments).all(|v| v.is_finite())
                && f.landmarks.iter().flatten().all(|v| v.is_finite())
                && f.grf.iter().flatten().flatten().all(|v| v.is_finite());
            if !finite {
                return Err(RefError::Format(format!("non-finite value in frame {i}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn time(&self, frame: usize) -> f64 {
        frame as f64 / self.sample_rate
    }

    /// Length of one wrap-around period, s.
    pub fn period(&self) -> f64 {
        self.frames.len() as f64 / self.sample_rate
    }

    /// Forward root displacement per wrap-around period, m.
    pub fn period_advance(&self) -> f64 {
        let n = self.frames.len();
        let span = self.frames[n - 1].q[0] - self.frames[0].q[0];
        span * n as f64 / (n - 1) as f64
    }

    /// Frame at any integer index, treating the clip as periodic with the
    /// forward position unwrapped.
    pub fn frame_wrapped(&self, k: i64) -> RefFrame {
        let n = self.frames.len() as i64;
        let cycle = k.div_euclid(n);
        let mut f = self.frames[k.rem_euclid(n) as usize].clone();
        if cycle != 0 {
            f.shift_x(cycle as f64 * self.period_advance());
        }
        f
    }

    /// Linearly interpolated frame at time `t`, wrapping cyclically.
    pub fn sample_at(&self, t: f64) -> RefFrame {
        let s = t * self.sample_rate;
        let k = s.floor();
        let w = s - k;
        let a = self.frame_wrapped(k as i64);
        if w == 0.0 {
            return a;
        }
        a.lerp(&self.frame_wrapped(k as i64 + 1), w)
    }

    /// Linear resampling to a new rate over the same time span.
    pub fn resample(&self, rate: f64) -> Result<ReferenceClip, RefError> {
        if !(rate > 0.0) {
            return Err(RefError::InvalidArgument("resample rate must be positive".into()));
        }
        let n = (self.period() * rate).round() as usize;
        let frames = (0..n).map(|i| self.sample_at(i as f64 / rate)).collect();
        Ok(ReferenceClip {
            sample_rate: rate,
            frames,
            meta: self.meta.clone(),
        })
    }

    /// One channel of every frame.
    pub fn channel(&self, f: impl Fn(&RefFrame) -> f64) -> Vec<f64> {
        self.frames.iter().map(f).collect()
    }

    /// Vertical GRF per foot (body weights) when the clip carries GRF.
    pub fn vertical_grf(&self) -> Option<[Vec<f64>; 2]> {
        let l = self.frames.iter().map(|f| f.grf.map(|g| g[0][1])).collect::<Option<Vec<_>>>()?;
        let r = self.frames.iter().map(|f| f.grf.map(|g| g[1][1])).collect::<Option<Vec<_>>>()?;
        Some([l, r])
    }
}

/// Per-interval and overall treadmill belt speed.
#[derive(Debug, Clone, PartialEq)]
pub struct BeltSpeed {
    /// m/s per stance interval, in order.
    pub intervals: Vec<f64>,
    /// Duration-weighted mean, m/s.
    pub overall: f64,
}

/// Minimum stance interval length for belt-speed estimation.
pub const MIN_STANCE_FRAMES: usize = 5;

/// Belt speed from a toe marker's forward position and a stance mask:
/// the negative mean toe velocity over each stance interval.
pub fn estimate_belt_speed(toe_x: &[f64], stance: &[bool], sample_rate: f64) -> Result<BeltSpeed, RefError> {
    if toe_x.len() != stance.len() {
        return Err(RefError::InvalidArgument("toe trajectory and stance mask differ in length".into()));
    }
    let mut intervals = Vec::new();
    let mut durations = Vec::new();
    let mut i = 0;
    while i < stance.len() {
        if !stance[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < stance.len() && stance[i] {
            i += 1;
        }
        let len = i - start;
        if len >= MIN_STANCE_FRAMES {
            let duration = (len - 1) as f64 / sample_rate;
            intervals.push(-(toe_x[i - 1] - toe_x[start]) / duration);
            durations.push(duration);
        }
    }
    if intervals.is_empty() {
        return Err(RefError::NoStance(MIN_STANCE_FRAMES));
    }
    let total: f64 = durations.iter().sum();
    let overall = intervals.iter().zip(&durations).map(|(v, d)| v * d).sum::<f64>() / total;
    Ok(BeltSpeed { intervals, overall })
}

/// Adds the belt translation `v·t` to every global forward position.
pub fn to_overground(clip: &ReferenceClip, belt_speed: f64) -> Result<ReferenceClip, RefError> {
    if !(belt_speed >= 0.0 && belt_speed.is_finite()) {
        return Err(RefError::InvalidArgument(format!("belt speed {belt_speed} must be >= 0")));
    }
    if belt_speed == 0.0 {
        return Ok(clip.clone());
    }
    let mut out = clip.clone();
    for (i, f) in out.frames.iter_mut().enumerate() {
        f.shift_x(belt_speed * clip.time(i));
        f.qdot[0] += belt_speed;
    }
    out.meta.treadmill = false;
    Ok(out)
}

/// Swaps left and right channels. Requires every lateral channel to be
/// declared in the clip's pairing.
pub fn mirror_clip(clip: &ReferenceClip) -> Result<ReferenceClip, RefError> {
    for base in ["hip", "knee", "ankle", "foot"] {
        for suffix in ["_l", "_r"] {
            let name = format!("{base}{suffix}");
            if !clip.meta.pairs.iter().any(|p| p.contains(&name)) {
                return Err(RefError::UnpairedChannel(name));
            }
        }
    }
    let optional = [
        ("contact", clip.frames[0].contact.is_some()),
        ("grf", clip.frames[0].grf.is_some()),
    ];
    for (base, present) in optional {
        if present && !clip.meta.pairs.iter().any(|p| p[0] == format!("{base}_l") && p[1] == format!("{base}_r")) {
            return Err(RefError::UnpairedChannel(format!("{base}_l")));
        }
    }
    Ok(ReferenceClip {
        sample_rate: clip.sample_rate,
        frames: clip.frames.iter().map(RefFrame::mirrored).collect(),
        meta: ClipMeta {
            mirrored: !clip.meta.mirrored,
            ..clip.meta.clone()
        },
    })
}

/// Concatenates a clip with its mirror image (the mirrored copy follows).
pub fn with_mirror(clip: &ReferenceClip) -> Result<ReferenceClip, RefError> {
    let m = mirror_clip(clip)?;
    let mut out = clip.clone();
    out.frames.extend(m.frames);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn ramp_clip(n: usize) -> ReferenceClip {
        let frames = (0..n)
            .map(|i| {
                let t = i as f64;
                let mut q = [0.0; N_DOF];
                q[0] = 0.01 * t;
                q[1] = 0.93;
                for (j, v) in q.iter_mut().enumerate().skip(2) {
                    *v = (0.1 * t + j as f64).sin() * 0.3;
                }
                RefFrame {
                    q,
                    qdot: [0.5; N_DOF],
                    moments: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
                    landmarks: [[q[0] + 0.1, 0.0], [q[0] - 0.1, 0.05], [q[0], 1.63]],
                    contact: Some([i % 2 == 0, i % 3 == 0]),
                    grf: Some([[0.1, 1.0], [0.0, 0.2]]),
                }
            })
            .collect();
        ReferenceClip {
            sample_rate: 100.0,
            frames,
            meta: ClipMeta {
                name: "ramp".into(),
                speed: 1.0,
                subject_mass: 70.0,
                mirrored: false,
                treadmill: true,
                pairs: default_pairs(),
            },
        }
    }

    #[test]
    fn mirror_swaps_channels() {
        let clip = ramp_clip(20);
        let m = mirror_clip(&clip).unwrap();
        assert!(m.meta.mirrored);
        assert_eq!(m.frames[3].q[3], clip.frames[3].q[6]);
        assert_eq!(m.frames[3].moments[0], 0.4);
        assert_eq!(m.frames[3].landmarks[0], clip.frames[3].landmarks[1]);
        assert_eq!(m.frames[3].landmarks[2], clip.frames[3].landmarks[2]);
        assert_eq!(mirror_clip(&m).unwrap(), clip);
    }

    #[test]
    fn mirror_requires_pairing() {
        let mut clip = ramp_clip(10);
        clip.meta.pairs.retain(|p| p[0] != "knee_l");
        assert!(matches!(mirror_clip(&clip), Err(RefError::UnpairedChannel(c)) if c == "knee_l"));
    }

    #[test]
    fn belt_speed_examples() {
        let fs = 100.0;
        let still = vec![0.3; 40];
        let stance = vec![true; 40];
        assert_eq!(estimate_belt_speed(&still, &stance, fs).unwrap().overall, 0.0);

        // two stances of equal duration at 1.0 and 1.4 m/s, separated by swing
        let mut x = Vec::new();
        let mut mask = Vec::new();
        for (k, v) in [1.0, 1.4].iter().enumerate() {
            for i in 0..30 {
                x.push(k as f64 - v * i as f64 / fs);
                mask.push(true);
            }
            for _ in 0..10 {
                x.push(5.0);
                mask.push(false);
            }
        }
        let b = estimate_belt_speed(&x, &mask, fs).unwrap();
        assert!((b.intervals[0] - 1.0).abs() < 1e-12 && (b.intervals[1] - 1.4).abs() < 1e-12);
        assert!((b.overall - 1.2).abs() < 1e-12);
        assert!(matches!(
            estimate_belt_speed(&x, &vec![false; x.len()], fs),
            Err(RefError::NoStance(_))
        ));
    }

    #[test]
    fn overground_keeps_joint_channels() {
        let clip = ramp_clip(50);
        assert_eq!(to_overground(&clip, 0.0).unwrap(), clip);
        let o = to_overground(&clip, 1.2).unwrap();
        for (a, b) in clip.frames.iter().zip(&o.frames) {
            assert_eq!(a.q[1..], b.q[1..]);
            assert_eq!(a.moments, b.moments);
        }
        let dt = clip.time(49);
        let gained = o.frames[49].q[0] - clip.frames[49].q[0];
        assert!((gained - 1.2 * dt).abs() < 1e-12);
    }

    #[test]
    fn sampling_wraps_with_forward_progress() {
        let clip = ramp_clip(20);
        let adv = clip.period_advance();
        let f = clip.sample_at(clip.period() + 3.0 / clip.sample_rate);
        assert!((f.q[0] - clip.frames[3].q[0] - adv).abs() < 1e-12);
        assert!((f.q[4] - clip.frames[3].q[4]).abs() < 1e-9);
        let mid = clip.sample_at(2.5 / clip.sample_rate);
        assert!((mid.q[5] - 0.5 * (clip.frames[2].q[5] + clip.frames[3].q[5])).abs() < 1e-12);
    }
}
