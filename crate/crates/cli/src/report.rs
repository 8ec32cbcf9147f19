//! Report bundles: one JSON summary plus plot-ready CSV tables.
//!
//! Everything is computed in memory first and written through a staging
//! directory, so a failed report leaves no partial files behind.

use std::fs;
use std::path::{Path, PathBuf};

use gaitlab_core::config::default_muscles;
use gaitlab_core::layout::{JointKind, JOINT_NAMES};
use gaitlab_core::metabolics::BASAL_RATE;
use gaitlab_core::refmotion::ReferenceClip;
use gaitlab_core::reward::Phase;
use gaitlab_core::trace::EpisodeTrace;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{
    default_selection, extract_torque_profiles, gross_cost, symmetry_rmse_set, tracking_metrics_set, MetricsError,
    TorqueProfiles, TrackingMetrics, CYCLE_POINTS,
};

pub const REPORT_FILE: &str = "report.json";
pub const TRACKING_FILE: &str = "tracking_curves.csv";
pub const METABOLICS_FILE: &str = "metabolics.csv";
pub const TORQUE_FILE: &str = "torque_profiles.csv";
pub const DEVIATIONS_FILE: &str = "deviations.csv";
pub const SYMMETRY_ENERGY_FILE: &str = "symmetry_energy.csv";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no traces to report on")]
    Empty,
    #[error("traces come from different configurations ({0} and {1})")]
    MixedFingerprints(String, String),
    #[error("inconsistent trace: {0}")]
    Units(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot write report to {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitReport {
    pub fingerprint: String,
    pub device: String,
    pub phase: Phase,
    /// m/s
    pub speed: f64,
    /// kg
    pub model_mass: f64,
    pub episodes: usize,
    pub steps: usize,
    pub mean_reward: f64,
    /// W/kg, basal rate included.
    pub gross_cost: f64,
    pub tracking: Option<TrackingMetrics>,
    /// Why tracking metrics are missing.
    pub tracking_note: Option<String>,
    /// deg, hip, knee and ankle
    pub symmetry_rmse: Option<f64>,
    pub symmetry_note: Option<String>,
    pub torque: Option<TorqueProfiles>,
    /// Same quantities for the comparison trace set, when given.
    pub baseline: Option<BaselineSummary>,
    pub cycle_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub fingerprint: String,
    pub gross_cost: f64,
    pub symmetry_rmse: Option<f64>,
    pub mean_reward: f64,
}

/// A report with its files rendered but not yet written.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub report: GaitReport,
    pub files: Vec<(&'static str, Vec<u8>)>,
}

fn check_set(traces: &[EpisodeTrace]) -> Result<(), ReportError> {
    let first = traces.first().ok_or(ReportError::Empty)?;
    for t in traces {
        if t.meta.fingerprint != first.meta.fingerprint {
            return Err(ReportError::MixedFingerprints(
                first.meta.fingerprint.clone(),
                t.meta.fingerprint.clone(),
            ));
        }
        let m = t.meta.model_mass;
        if !(m.is_finite() && m > 0.0) || m != first.meta.model_mass {
            return Err(ReportError::Units(format!("model mass {m} kg")));
        }
        if !t.is_consistent() {
            return Err(ReportError::Units("non-uniform time grid or ragged channels".into()));
        }
    }
    if traces.iter().all(|t| t.is_empty()) {
        return Err(ReportError::Empty);
    }
    Ok(())
}

fn mean_reward(traces: &[EpisodeTrace]) -> f64 {
    traces.iter().map(EpisodeTrace::total_reward).sum::<f64>() / traces.len() as f64
}

fn symmetry(traces: &[EpisodeTrace]) -> Result<(Option<f64>, Option<String>), ReportError> {
    match symmetry_rmse_set(traces, &JointKind::ALL, default_selection()) {
        Ok(v) => Ok((Some(v), None)),
        Err(e @ MetricsError::InsufficientCycles { .. }) => Ok((None, Some(e.to_string()))),
        Err(e) => Err(e.into()),
    }
}

/// Computes every metric and renders all tables. `baseline` is an optional
/// comparison set (for example the unassisted or unimpaired walker).
pub fn build_report(
    traces: &[EpisodeTrace],
    clip: &ReferenceClip,
    baseline: Option<&[EpisodeTrace]>,
) -> Result<ReportBundle, ReportError> {
    check_set(traces)?;
    let traces: Vec<EpisodeTrace> = traces.iter().filter(|t| !t.is_empty()).cloned().collect();
    let meta = &traces[0].meta;

    let (tracking, tracking_note) = match tracking_metrics_set(&traces, clip, default_selection()) {
        Ok(t) => (Some(t), None),
        Err(e @ MetricsError::InsufficientCycles { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let (symmetry_rmse, symmetry_note) = symmetry(&traces)?;
    let torque = if meta.device == "none" {
        None
    } else {
        match extract_torque_profiles(&traces, meta.model_mass) {
            Ok(p) => Some(p),
            Err(MetricsError::InsufficientCycles { .. }) => None,
            Err(e) => return Err(e.into()),
        }
    };
    let baseline = match baseline {
        Some(b) => {
            check_set(b)?;
            Some(BaselineSummary {
                fingerprint: b[0].meta.fingerprint.clone(),
                gross_cost: gross_cost(b)?,
                symmetry_rmse: symmetry(b)?.0,
                mean_reward: mean_reward(b),
            })
        }
        None => None,
    };

    let report = GaitReport {
        fingerprint: meta.fingerprint.clone(),
        device: meta.device.clone(),
        phase: meta.phase,
        speed: meta.speed,
        model_mass: meta.model_mass,
        episodes: traces.len(),
        steps: traces.iter().map(EpisodeTrace::len).sum(),
        mean_reward: mean_reward(&traces),
        gross_cost: gross_cost(&traces)?,
        tracking,
        tracking_note,
        symmetry_rmse,
        symmetry_note,
        torque,
        baseline,
        cycle_points: CYCLE_POINTS,
    };

    let mut files = vec![(
        REPORT_FILE,
        serde_json::to_vec_pretty(&report).map_err(|e| ReportError::Units(e.to_string()))?,
    )];
    files.push((TRACKING_FILE, tracking_table(&report)?));
    files.push((DEVIATIONS_FILE, deviation_table(&report)?));
    files.push((METABOLICS_FILE, metabolics_table(&traces)?));
    files.push((SYMMETRY_ENERGY_FILE, symmetry_energy_table(&report)?));
    if let Some(t) = &report.torque {
        files.push((TORQUE_FILE, torque_table(t)?));
    }
    Ok(ReportBundle { report, files })
}

impl ReportBundle {
    /// Writes every file into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<(), ReportError> {
        let io = |p: &Path, e: std::io::Error| ReportError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let staging = tempfile::Builder::new()
            .prefix(".report-")
            .tempdir_in(dir)
            .map_err(|e| io(dir, e))?;
        for (name, bytes) in &self.files {
            let p = staging.path().join(name);
            fs::write(&p, bytes).map_err(|e| io(&p, e))?;
        }
        for (name, _) in &self.files {
            let target: PathBuf = dir.join(name);
            fs::rename(staging.path().join(name), &target).map_err(|e| io(&target, e))?;
        }
        Ok(())
    }
}

/// Builds and writes a report in one go.
pub fn report(
    traces: &[EpisodeTrace],
    clip: &ReferenceClip,
    baseline: Option<&[EpisodeTrace]>,
    out: &Path,
) -> Result<GaitReport, ReportError> {
    let bundle = build_report(traces, clip, baseline)?;
    bundle.write(out)?;
    Ok(bundle.report)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, ReportError> {
    w.into_inner().map_err(|e| ReportError::Units(e.to_string()))
}

fn csv_err(e: csv::Error) -> ReportError {
    ReportError::Units(e.to_string())
}

fn phase_pct(k: usize) -> f64 {
    100.0 * k as f64 / (CYCLE_POINTS - 1) as f64
}

fn tracking_table(report: &GaitReport) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["channel", "unit", "cycle_pct", "sim_mean", "sim_std", "ref_mean", "ref_std"])
        .map_err(csv_err)?;
    for c in report.tracking.iter().flat_map(|t| &t.curves) {
        for k in 0..c.sim.mean.len() {
            w.write_record([
                c.channel.clone(),
                c.unit.clone(),
                phase_pct(k).to_string(),
                c.sim.mean[k].to_string(),
                c.sim.std[k].to_string(),
                c.reference.mean[k].to_string(),
                c.reference.std[k].to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Pointwise simulated-minus-reference joint angles, plus per-joint
/// summary rows.
fn deviation_table(report: &GaitReport) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["joint", "unit", "cycle_pct", "deviation"]).map_err(csv_err)?;
    if let Some(t) = &report.tracking {
        for name in JOINT_NAMES {
            let c = t.curves.iter().find(|c| c.channel == format!("{name}_angle")).unwrap();
            for k in 0..c.sim.mean.len() {
                let d = c.sim.mean[k] - c.reference.mean[k];
                w.write_record([name, "deg", &phase_pct(k).to_string(), &d.to_string()])
                    .map_err(csv_err)?;
            }
        }
        for m in &t.angles {
            w.write_record([&format!("{}_rmse", m.joint), "deg", "", &m.rmse.to_string()])
                .map_err(csv_err)?;
        }
    }
    finish(w)
}

fn metabolics_table(traces: &[EpisodeTrace]) -> Result<Vec<u8>, ReportError> {
    let mass = traces[0].meta.model_mass;
    let n_muscles = traces[0].steps[0].metabolics.len();
    let defaults = default_muscles();
    let names: Vec<String> = if defaults.len() == n_muscles {
        defaults.names().iter().map(|s| s.to_string()).collect()
    } else {
        (0..n_muscles).map(|i| format!("muscle_{i}")).collect()
    };
    let samples: usize = traces.iter().map(EpisodeTrace::len).sum();
    let mut per_muscle = vec![0.0; n_muscles];
    for t in traces {
        for s in &t.steps {
            for (acc, r) in per_muscle.iter_mut().zip(&s.metabolics) {
                *acc += r.watts();
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["item", "unit", "value"]).map_err(csv_err)?;
    for (name, watts) in names.iter().zip(&per_muscle) {
        w.write_record([name.as_str(), "W/kg", &(watts / samples as f64 / mass).to_string()])
            .map_err(csv_err)?;
    }
    w.write_record(["basal", "W/kg", &BASAL_RATE.to_string()]).map_err(csv_err)?;
    w.write_record(["gross", "W/kg", &gross_cost(traces)?.to_string()])
        .map_err(csv_err)?;
    finish(w)
}

fn symmetry_energy_table(report: &GaitReport) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "unit", "value", "baseline", "delta"]).map_err(csv_err)?;
    let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let b = report.baseline.as_ref();
    let rows = [
        ("symmetry_rmse", "deg", report.symmetry_rmse, b.and_then(|b| b.symmetry_rmse)),
        ("gross_cost", "W/kg", Some(report.gross_cost), b.map(|b| b.gross_cost)),
        ("mean_reward", "1", Some(report.mean_reward), b.map(|b| b.mean_reward)),
    ];
    for (name, unit, value, base) in rows {
        let delta = value.zip(base).map(|(v, b)| v - b);
        w.write_record([name, unit, &fmt(value), &fmt(base), &fmt(delta)])
            .map_err(csv_err)?;
    }
    finish(w)
}

/// Plot-ready table of torque profiles.
pub fn torque_table(t: &TorqueProfiles) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["joint", "unit", "cycle_pct", "mean", "std"]).map_err(csv_err)?;
    for p in &t.profiles {
        for k in 0..p.curve.mean.len() {
            w.write_record([
                p.joint.as_str(),
                "N·m/kg",
                &phase_pct(k).to_string(),
                &p.curve.mean[k].to_string(),
                &p.curve.std[k].to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}
