//! Clip file format: columnar CSV plus a JSON sidecar (`<name>.json` next to
//! `<name>.csv`).
//!
//! CSV columns, in order:
//!
//! | columns | unit |
//! |---|---|
//! | `time` | s |
//! | `root_x`, `root_y` | m |
//! | `pelvis_tilt`, `hip_l` … `ankle_r` | rad |
//! | `<dof>_vel` | m/s or rad/s |
//! | `<joint>_moment` | N·m/kg |
//! | `foot_l_x`, `foot_l_y`, `foot_r_x`, `foot_r_y`, `head_x`, `head_y` | m |
//! | optional `contact_l`, `contact_r` | 0/1 |
//! | optional `grf_l_x`, `grf_l_y`, `grf_r_x`, `grf_r_y` | BW |
//!
//! The sidecar repeats the channel list with units and declares the
//! left/right pairing used by mirroring.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClipMeta, RefError, RefFrame, ReferenceClip, N_LANDMARKS};
use crate::layout::{DOF_NAMES, JOINT_NAMES, LANDMARK_NAMES, N_DOF, N_JOINTS};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSchema {
    pub format_version: u32,
    pub name: String,
    pub sample_rate: f64,
    pub speed: f64,
    pub subject_mass: f64,
    pub mirrored: bool,
    pub treadmill: bool,
    pub channels: Vec<Channel>,
    pub pairs: Vec<[String; 2]>,
}

fn expected_channels(contact: bool, grf: bool) -> Vec<Channel> {
    let ch = |name: String, unit: &str| Channel {
        name,
        unit: unit.to_string(),
    };
    let mut out = vec![ch("time".into(), "s")];
    for (i, d) in DOF_NAMES.iter().enumerate() {
        out.push(ch(d.to_string(), if i < 2 { "m" } else { "rad" }));
    }
    for (i, d) in DOF_NAMES.iter().enumerate() {
        out.push(ch(format!("{d}_vel"), if i < 2 { "m/s" } else { "rad/s" }));
    }
    for j in JOINT_NAMES {
        out.push(ch(format!("{j}_moment"), "N.m/kg"));
    }
    for l in LANDMARK_NAMES {
        out.push(ch(format!("{l}_x"), "m"));
        out.push(ch(format!("{l}_y"), "m"));
    }
    if contact {
        out.push(ch("contact_l".into(), "bool"));
        out.push(ch("contact_r".into(), "bool"));
    }
    if grf {
        for s in ["l", "r"] {
            out.push(ch(format!("grf_{s}_x"), "BW"));
            out.push(ch(format!("grf_{s}_y"), "BW"));
        }
    }
    out
}

/// Channel base name for pairing checks (`hip_l_vel` → `hip_l`).
fn base_name(channel: &str) -> &str {
    for suffix in ["_vel", "_moment", "_x", "_y"] {
        if let Some(b) = channel.strip_suffix(suffix) {
            return b;
        }
    }
    channel
}

fn check_pairs(schema: &ClipSchema) -> Result<(), RefError> {
    for c in &schema.channels {
        let base = base_name(&c.name);
        if (base.ends_with("_l") || base.ends_with("_r")) && !schema.pairs.iter().any(|p| p.iter().any(|n| n == base)) {
            return Err(RefError::UnpairedChannel(base.to_string()));
        }
    }
    for p in &schema.pairs {
        let (l, r) = (p[0].strip_suffix("_l"), p[1].strip_suffix("_r"));
        if l.is_none() || l != r {
            return Err(RefError::Format(format!("pair {:?} is not a left/right pair", p)));
        }
    }
    Ok(())
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RefError {
    RefError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes `clip` to `csv` and its sidecar.
pub fn write_clip(clip: &ReferenceClip, csv: &Path) -> Result<(), RefError> {
    let contact = clip.frames.iter().all(|f| f.contact.is_some());
    let grf = clip.frames.iter().all(|f| f.grf.is_some());
    let channels = expected_channels(contact, grf);
    let schema = ClipSchema {
        format_version: FORMAT_VERSION,
        name: clip.meta.name.clone(),
        sample_rate: clip.sample_rate,
        speed: clip.meta.speed,
        subject_mass: clip.meta.subject_mass,
        mirrored: clip.meta.mirrored,
        treadmill: clip.meta.treadmill,
        channels: channels.clone(),
        pairs: clip.meta.pairs.clone(),
    };
    let mut w = csv::Writer::from_path(csv).map_err(|e| io_err(csv, e))?;
    w.write_record(channels.iter().map(|c| c.name.as_str())).map_err(|e| io_err(csv, e))?;
    for (i, f) in clip.frames.iter().enumerate() {
        let mut row: Vec<String> = vec![clip.time(i).to_string()];
        row.extend(f.q.iter().map(f64::to_string));
        row.extend(f.qdot.iter().map(f64::to_string));
        row.extend(f.moments.iter().map(f64::to_string));
        row.extend(f.landmarks.iter().flatten().map(f64::to_string));
        if contact {
            let c = f.contact.unwrap();
            row.extend(c.iter().map(|b| if *b { "1".to_string() } else { "0".to_string() }));
        }
        if grf {
            row.extend(f.grf.unwrap().iter().flatten().map(f64::to_string));
        }
        w.write_record(&row).map_err(|e| io_err(csv, e))?;
    }
    w.flush().map_err(|e| io_err(csv, e))?;
    let side = sidecar_path(csv);
    let json = serde_json::to_string_pretty(&schema).map_err(|e| io_err(&side, e))?;
    fs::write(&side, json).map_err(|e| io_err(&side, e))
}

/// Reads a clip and validates it against its sidecar.
pub fn read_clip(csv: &Path) -> Result<ReferenceClip, RefError> {
    let side = sidecar_path(csv);
    let text = fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
    let schema: ClipSchema = serde_json::from_str(&text).map_err(|e| RefError::Format(format!("sidecar: {e}")))?;
    if schema.format_version != FORMAT_VERSION {
        return Err(RefError::Format(format!(
            "unsupported clip format version {}",
            schema.format_version
        )));
    }
    check_pairs(&schema)?;
    let has = |n: &str| schema.channels.iter().any(|c| c.name == n);
    let contact = has("contact_l");
    let grf = has("grf_l_y");
    let expected = expected_channels(contact, grf);
    if schema.channels != expected {
        return Err(RefError::Format(
            "sidecar channel list or units do not match the clip layout".into(),
        ));
    }

    let mut r = csv::Reader::from_path(csv).map_err(|e| io_err(csv, e))?;
    let header: Vec<String> = r.headers().map_err(|e| io_err(csv, e))?.iter().map(str::to_string).collect();
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(h, c)| *h != c.name) {
        return Err(RefError::Format("CSV header does not match the sidecar channel list".into()));
    }

    let mut frames = Vec::new();
    let mut times = Vec::new();
    for (row_idx, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| io_err(csv, e))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| RefError::Format(format!("row {}: {e}", row_idx + 1)))?;
        let mut k = 0;
        let mut take = || {
            k += 1;
            vals[k - 1]
        };
        times.push(take());
        let mut f = RefFrame {
            q: [0.0; N_DOF],
            qdot: [0.0; N_DOF],
            moments: [0.0; N_JOINTS],
            landmarks: [[0.0; 2]; N_LANDMARKS],
            contact: None,
            grf: None,
        };
        f.q.iter_mut().for_each(|v| *v = take());
        f.qdot.iter_mut().for_each(|v| *v = take());
        f.moments.iter_mut().for_each(|v| *v = take());
        f.landmarks.iter_mut().flatten().for_each(|v| *v = take());
        if contact {
            f.contact = Some([take() != 0.0, take() != 0.0]);
        }
        if grf {
            f.grf = Some([[take(), take()], [take(), take()]]);
        }
        frames.push(f);
    }
    for (i, t) in times.iter().enumerate() {
        if (t - times[0] - i as f64 / schema.sample_rate).abs() > 1e-9 {
            return Err(RefError::NonUniform(i));
        }
    }
    let clip = ReferenceClip {
        sample_rate: schema.sample_rate,
        frames,
        meta: ClipMeta {
            name: schema.name,
            speed: schema.speed,
            subject_mass: schema.subject_mass,
            mirrored: schema.mirrored,
            treadmill: schema.treadmill,
            pairs: schema.pairs,
        },
    };
    clip.validate()?;
    Ok(clip)
}
