//! Gait-cycle metrics on episode traces.
//!
//! Every curve is cut at heel strikes, resampled to [`CYCLE_POINTS`] samples
//! and averaged over the selected cycles. Simulated and reference signals
//! are each cut by their own events. Angles are reported in degrees,
//! moments and assistive torques in N·m/kg, forces in body weights.

use gaitlab_core::config::{default_skeleton, device_by_name};
use gaitlab_core::layout::{JointKind, Side, JOINT_NAMES, ROOT_DOFS};
use gaitlab_core::metabolics::{gross_metabolic_cost, MetabolicsError};
use gaitlab_core::refmotion::{
    cycle_normalize, detect_gait_events, zero_lag_lowpass, CycleAverage, CycleSelection, EventPolarity, GaitEvents,
    RefError, ReferenceClip,
};
use gaitlab_core::trace::EpisodeTrace;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CYCLE_POINTS: usize = 100;
/// Hz, applied to simulated and reference moments alike.
pub const MOMENT_CUTOFF: f64 = 4.0;
/// Vertical force marking stance, body weights.
pub const STANCE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no complete gait cycle ({side})")]
    InsufficientCycles { side: &'static str },
    #[error("trace was recorded without an exoskeleton device")]
    NoDevice,
    #[error("empty trace set")]
    Empty,
    #[error("malformed trace: {0}")]
    Data(String),
    #[error(transparent)]
    Ref(#[from] RefError),
    #[error(transparent)]
    Metabolics(#[from] MetabolicsError),
}

/// The first ten cycles after two settling cycles, or every available cycle
/// on shorter traces.
pub fn default_selection() -> CycleSelection {
    CycleSelection {
        skip: 2,
        count: 10,
        allow_fewer: true,
    }
}

pub fn rmse(sim: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(sim.len(), reference.len());
    (sim.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / sim.len() as f64).sqrt()
}

/// Coefficient of determination against the reference mean.
pub fn r_squared(sim: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(sim.len(), reference.len());
    let mean = reference.iter().sum::<f64>() / reference.len() as f64;
    let ss_res: f64 = sim.iter().zip(reference).map(|(a, b)| (b - a).powi(2)).sum();
    let ss_tot: f64 = reference.iter().map(|b| (b - mean).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

/// Population-weighted merge of cycle averages over the same phase grid.
pub fn pool(parts: &[CycleAverage]) -> Option<CycleAverage> {
    let n: usize = parts.iter().map(|p| p.cycles).sum();
    let points = parts.first()?.mean.len();
    if n == 0 {
        return None;
    }
    let mut mean = vec![0.0; points];
    let mut sq = vec![0.0; points];
    for p in parts {
        let w = p.cycles as f64 / n as f64;
        for j in 0..points {
            mean[j] += w * p.mean[j];
            sq[j] += w * (p.std[j].powi(2) + p.mean[j].powi(2));
        }
    }
    let std = (0..points).map(|j| (sq[j] - mean[j].powi(2)).max(0.0).sqrt()).collect();
    Some(CycleAverage { mean, std, cycles: n })
}

/// Time series pulled from one trace, or the reference sampled at the
/// trace's times.
#[derive(Debug, Clone)]
pub struct Signals {
    /// Hz
    pub rate: f64,
    /// rad, `JOINT_NAMES` order
    pub angles: [Vec<f64>; 6],
    /// N·m/kg
    pub moments: [Vec<f64>; 6],
    /// Vertical ground reaction per foot, body weights.
    pub grf: [Vec<f64>; 2],
    /// Assistive torque, N·m/kg.
    pub exo: [Vec<f64>; 6],
}

impl Signals {
    pub fn from_trace(trace: &EpisodeTrace) -> Result<Self, MetricsError> {
        let mass = trace.meta.model_mass;
        let bw = mass * default_skeleton().gravity;
        let mut s = Self::empty(trace.meta.control_rate);
        for r in &trace.steps {
            if r.state.q.len() < ROOT_DOFS + 6 || r.state.grf.len() != 2 || r.state.joint_moments.len() != 6 || r.exo_torque.len() != 6 {
                return Err(MetricsError::Data("unexpected state layout".into()));
            }
            for j in 0..6 {
                s.angles[j].push(r.state.q[ROOT_DOFS + j]);
                s.moments[j].push(r.state.joint_moments[j] / mass);
                s.exo[j].push(r.exo_torque[j] / mass);
            }
            for f in 0..2 {
                s.grf[f].push(r.state.grf[f][1] / bw);
            }
        }
        Ok(s)
    }

    /// Reference channels at the trace's sample times.
    pub fn reference(trace: &EpisodeTrace, clip: &ReferenceClip) -> Result<Self, MetricsError> {
        let mut s = Self::empty(trace.meta.control_rate);
        for r in &trace.steps {
            let f = clip.sample_at(trace.meta.clip_start + r.time);
            let grf = f
                .grf
                .ok_or_else(|| MetricsError::Data("reference clip carries no ground reaction forces".into()))?;
            for j in 0..6 {
                s.angles[j].push(f.q[ROOT_DOFS + j]);
                s.moments[j].push(f.moments[j]);
                s.exo[j].push(0.0);
            }
            for side in 0..2 {
                s.grf[side].push(grf[side][1]);
            }
        }
        Ok(s)
    }

    fn empty(rate: f64) -> Self {
        Self {
            rate,
            angles: Default::default(),
            moments: Default::default(),
            grf: Default::default(),
            exo: Default::default(),
        }
    }

    /// Heel strikes and toe-offs from the vertical forces; `None` when a
    /// side never completes a cycle.
    pub fn events(&self) -> Result<Option<GaitEvents>, MetricsError> {
        match detect_gait_events([&self.grf[0], &self.grf[1]], STANCE_THRESHOLD, EventPolarity::Force, self.rate) {
            Ok(e) => Ok(Some(e)),
            Err(RefError::ZeroCycles(_)) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn filtered_moments(&self) -> Result<[Vec<f64>; 6], MetricsError> {
        let mut out: [Vec<f64>; 6] = Default::default();
        for j in 0..6 {
            out[j] = zero_lag_lowpass(&self.moments[j], self.rate, MOMENT_CUTOFF)?;
        }
        Ok(out)
    }

    fn with_filtered_moments(self) -> Result<Self, MetricsError> {
        let moments = self.filtered_moments()?;
        Ok(Self { moments, ..self })
    }
}

fn side_name(side: usize) -> &'static str {
    if side == 0 {
        "left"
    } else {
        "right"
    }
}

/// Cycle average of `signal` cut at one side's heel strikes; `None` when the
/// side has no complete cycle.
fn side_curve(signal: &[f64], events: &GaitEvents, side: usize, sel: CycleSelection) -> Result<Option<CycleAverage>, MetricsError> {
    match cycle_normalize(signal, &events.heel_strikes[side], sel, CYCLE_POINTS) {
        Ok(c) => Ok(Some(c)),
        Err(RefError::InsufficientCycles { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Pairs each signal set with its events, dropping traces without a full
/// cycle on both sides.
fn with_events(signals: impl Iterator<Item = Result<Signals, MetricsError>>) -> Result<Vec<(Signals, GaitEvents)>, MetricsError> {
    let mut out = Vec::new();
    for s in signals {
        let s = s?;
        if let Some(e) = s.events()? {
            out.push((s, e));
        }
    }
    Ok(out)
}

/// Pooled cycle averages of one channel over several traces.
fn pooled_curve(
    sets: &[(Signals, GaitEvents)],
    side: usize,
    sel: CycleSelection,
    channel: &dyn Fn(&Signals) -> Vec<f64>,
) -> Result<CycleAverage, MetricsError> {
    let mut parts = Vec::new();
    for (sig, ev) in sets {
        if let Some(c) = side_curve(&channel(sig), ev, side, sel)? {
            parts.push(c);
        }
    }
    pool(&parts).ok_or(MetricsError::InsufficientCycles { side: side_name(side) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointMetric {
    /// Joint kind; both sides' curves are concatenated.
    pub joint: String,
    pub unit: String,
    pub rmse: f64,
    pub r2: f64,
}

/// Simulated and reference cycle averages of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePair {
    pub channel: String,
    pub unit: String,
    pub sim: CycleAverage,
    pub reference: CycleAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    pub angles: Vec<JointMetric>,
    pub moments: Vec<JointMetric>,
    /// Vertical GRF, both feet concatenated.
    pub grf_rmse_bw: f64,
    /// Simulated cycles averaged per side.
    pub cycles: [usize; 2],
    pub curves: Vec<CurvePair>,
}

fn metric(joint: &str, unit: &str, pairs: &[&CurvePair]) -> JointMetric {
    let sim: Vec<f64> = pairs.iter().flat_map(|p| p.sim.mean.iter().copied()).collect();
    let reference: Vec<f64> = pairs.iter().flat_map(|p| p.reference.mean.iter().copied()).collect();
    JointMetric {
        joint: joint.to_string(),
        unit: unit.to_string(),
        rmse: rmse(&sim, &reference),
        r2: r_squared(&sim, &reference),
    }
}

pub fn tracking_metrics(trace: &EpisodeTrace, clip: &ReferenceClip) -> Result<TrackingMetrics, MetricsError> {
    tracking_metrics_set(std::slice::from_ref(trace), clip, default_selection())
}

/// Tracking errors with cycles pooled across `traces`.
pub fn tracking_metrics_set(
    traces: &[EpisodeTrace],
    clip: &ReferenceClip,
    sel: CycleSelection,
) -> Result<TrackingMetrics, MetricsError> {
    if traces.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sim = Vec::new();
    let mut refs = Vec::new();
    for t in traces {
        let s = Signals::from_trace(t)?;
        let r = Signals::reference(t, clip)?;
        let (Some(es), Some(er)) = (s.events()?, r.events()?) else {
            continue;
        };
        sim.push((s.with_filtered_moments()?, es));
        refs.push((r.with_filtered_moments()?, er));
    }
    if sim.is_empty() {
        return Err(MetricsError::InsufficientCycles { side: "no usable trace" });
    }

    let deg = 180.0 / std::f64::consts::PI;
    let mut curves = Vec::new();
    for (j, name) in JOINT_NAMES.iter().enumerate() {
        let side = j / 3;
        let angle = move |s: &Signals| s.angles[j].iter().map(|a| a * deg).collect::<Vec<f64>>();
        let moment = move |s: &Signals| s.moments[j].clone();
        curves.push(CurvePair {
            channel: format!("{name}_angle"),
            unit: "deg".into(),
            sim: pooled_curve(&sim, side, sel, &angle)?,
            reference: pooled_curve(&refs, side, sel, &angle)?,
        });
        curves.push(CurvePair {
            channel: format!("{name}_moment"),
            unit: "N·m/kg".into(),
            sim: pooled_curve(&sim, side, sel, &moment)?,
            reference: pooled_curve(&refs, side, sel, &moment)?,
        });
    }
    for side in 0..2 {
        let grf = move |s: &Signals| s.grf[side].clone();
        curves.push(CurvePair {
            channel: format!("grf_{}", if side == 0 { "l" } else { "r" }),
            unit: "BW".into(),
            sim: pooled_curve(&sim, side, sel, &grf)?,
            reference: pooled_curve(&refs, side, sel, &grf)?,
        });
    }

    let find = |c: &str| curves.iter().find(|p| p.channel == c).unwrap();
    let mut angles = Vec::new();
    let mut moments = Vec::new();
    for kind in JointKind::ALL {
        let n = kind.name();
        angles.push(metric(n, "deg", &[find(&format!("{n}_l_angle")), find(&format!("{n}_r_angle"))]));
        moments.push(metric(n, "N·m/kg", &[find(&format!("{n}_l_moment")), find(&format!("{n}_r_moment"))]));
    }
    let grf = metric("grf", "BW", &[find("grf_l"), find("grf_r")]);
    let cycles = [find("hip_l_angle").sim.cycles, find("hip_r_angle").sim.cycles];
    Ok(TrackingMetrics {
        angles,
        moments,
        grf_rmse_bw: grf.rmse,
        cycles,
        curves,
    })
}

/// RMSE between left and right cycle-averaged angle curves, deg, over the
/// given joints.
pub fn symmetry_rmse(trace: &EpisodeTrace, joints: &[JointKind]) -> Result<f64, MetricsError> {
    symmetry_rmse_set(std::slice::from_ref(trace), joints, default_selection())
}

pub fn symmetry_rmse_set(traces: &[EpisodeTrace], joints: &[JointKind], sel: CycleSelection) -> Result<f64, MetricsError> {
    if traces.is_empty() {
        return Err(MetricsError::Empty);
    }
    let sets = with_events(traces.iter().map(Signals::from_trace))?;
    let deg = 180.0 / std::f64::consts::PI;
    let mut left = Vec::new();
    let mut right = Vec::new();
    for kind in joints {
        for (side, out) in [(Side::Left, &mut left), (Side::Right, &mut right)] {
            let j = kind.joint_index(side);
            let c = pooled_curve(&sets, side.index(), sel, &|s: &Signals| s.angles[j].iter().map(|a| a * deg).collect())?;
            out.extend(c.mean);
        }
    }
    Ok(rmse(&left, &right))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorqueProfile {
    pub joint: String,
    /// N·m/kg over the gait cycle of the joint's side.
    pub curve: CycleAverage,
    /// Largest-magnitude value, signed, N·m/kg.
    pub peak: f64,
    /// % gait cycle
    pub peak_timing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorqueProfiles {
    pub device: String,
    pub affected_side: Side,
    pub profiles: Vec<TorqueProfile>,
    /// Affected over non-affected peak magnitude, per joint kind assisted on
    /// both sides.
    pub peak_ratios: Vec<(String, f64)>,
}

/// Signed extremum of a curve and its position in % of the cycle.
pub fn profile_peak(curve: &[f64]) -> (f64, f64) {
    let (k, v) = curve
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bk, bv), (k, &v)| if v.abs() > bv.abs() { (k, v) } else { (bk, bv) });
    (v, 100.0 * k as f64 / (curve.len() - 1) as f64)
}

pub fn peak_ratio(affected: f64, non_affected: f64) -> f64 {
    affected.abs() / non_affected.abs()
}

/// Side carrying weakened muscles (left when none are weakened).
pub fn affected_side(trace: &EpisodeTrace) -> Side {
    let right = trace.meta.mask.iter().filter(|(m, _)| m.ends_with("_r")).count();
    let left = trace.meta.mask.iter().filter(|(m, _)| m.ends_with("_l")).count();
    if right > left {
        Side::Right
    } else {
        Side::Left
    }
}

/// Cycle-averaged assistive torque per assisted joint, normalized by
/// `model_mass`.
pub fn extract_torque_profiles(traces: &[EpisodeTrace], model_mass: f64) -> Result<TorqueProfiles, MetricsError> {
    let first = traces.first().ok_or(MetricsError::Empty)?;
    let device = device_by_name(&first.meta.device)
        .filter(|d| d.is_active())
        .ok_or(MetricsError::NoDevice)?;
    let sets = with_events(traces.iter().map(|t| {
        let mut s = Signals::from_trace(t)?;
        for ch in &mut s.exo {
            ch.iter_mut().for_each(|v| *v *= t.meta.model_mass / model_mass);
        }
        Ok(s)
    }))?;
    let mut profiles = Vec::new();
    let mut assisted = device.assisted();
    assisted.sort_by_key(|(k, s)| k.joint_index(*s));
    for (kind, side) in &assisted {
        let j = kind.joint_index(*side);
        let curve = pooled_curve(&sets, side.index(), default_selection(), &|s: &Signals| s.exo[j].clone())?;
        let (peak, peak_timing) = profile_peak(&curve.mean);
        profiles.push(TorqueProfile {
            joint: JOINT_NAMES[j].to_string(),
            curve,
            peak,
            peak_timing,
        });
    }
    let affected = affected_side(first);
    let mut peak_ratios = Vec::new();
    for kind in JointKind::ALL {
        let get = |side: Side| {
            profiles
                .iter()
                .find(|p| p.joint == format!("{}{}", kind.name(), side.suffix()))
                .map(|p| p.peak)
        };
        if let (Some(a), Some(n)) = (get(affected), get(affected.opposite())) {
            peak_ratios.push((kind.name().to_string(), peak_ratio(a, n)));
        }
    }
    Ok(TorqueProfiles {
        device: first.meta.device.clone(),
        affected_side: affected,
        profiles,
        peak_ratios,
    })
}

/// Gross metabolic cost, W/kg, over every step of every trace.
pub fn gross_cost(traces: &[EpisodeTrace]) -> Result<f64, MetricsError> {
    let first = traces.first().ok_or(MetricsError::Empty)?;
    let samples: Vec<&[_]> = traces.iter().flat_map(|t| t.metabolic_samples()).collect();
    Ok(gross_metabolic_cost(&samples, first.meta.model_mass)?)
}
