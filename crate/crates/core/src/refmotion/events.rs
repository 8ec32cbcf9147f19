//! Heel-strike / toe-off detection and gait-cycle normalization.

use serde::{Deserialize, Serialize};

use super::RefError;

/// Minimum time a contact state must persist to count as a transition, s.
pub const DEBOUNCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventPolarity {
    /// Contact while the signal is at or above the threshold (force).
    Force,
    /// Contact while the signal is at or below the threshold (foot height).
    Height,
}

/// Frame indices of heel strikes and toe-offs, `[left, right]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaitEvents {
    pub heel_strikes: [Vec<usize>; 2],
    pub toe_offs: [Vec<usize>; 2],
}

impl GaitEvents {
    /// Complete heel-strike-to-heel-strike cycles on a side.
    pub fn cycles(&self, side: usize) -> usize {
        self.heel_strikes[side].len().saturating_sub(1)
    }

    pub fn mirrored(&self) -> GaitEvents {
        let [hl, hr] = self.heel_strikes.clone();
        let [tl, tr] = self.toe_offs.clone();
        GaitEvents {
            heel_strikes: [hr, hl],
            toe_offs: [tr, tl],
        }
    }
}

fn side_events(signal: &[f64], threshold: f64, polarity: EventPolarity, debounce: usize) -> (Vec<usize>, Vec<usize>) {
    let contact = |v: f64| match polarity {
        EventPolarity::Force => v >= threshold,
        EventPolarity::Height => v <= threshold,
    };
    let mut strikes = Vec::new();
    let mut offs = Vec::new();
    let Some(&first) = signal.first() else {
        return (strikes, offs);
    };
    let mut state = contact(first);
    let mut i = 1;
    while i < signal.len() {
        if contact(signal[i]) != state {
            let end = (i + debounce).min(signal.len());
            if signal[i..end].iter().all(|&v| contact(v) != state) {
                state = !state;
                if state {
                    strikes.push(i);
                } else {
                    offs.push(i);
                }
                i = end;
                continue;
            }
        }
        i += 1;
    }
    (strikes, offs)
}

/// Threshold-crossing event detection on a per-foot channel.
///
/// A heel strike is the first frame of a contact run, a toe-off the first
/// frame after it; a transition only counts if the new state persists for
/// [`DEBOUNCE`]. Fails when a side has no complete cycle.
pub fn detect_gait_events(
    channels: [&[f64]; 2],
    threshold: f64,
    polarity: EventPolarity,
    sample_rate: f64,
) -> Result<GaitEvents, RefError> {
    if polarity == EventPolarity::Force && !(threshold > 0.0) {
        return Err(RefError::InvalidArgument("force threshold must be > 0".into()));
    }
    let debounce = (DEBOUNCE * sample_rate).ceil() as usize;
    let mut events = GaitEvents::default();
    for (side, ch) in channels.iter().enumerate() {
        let (s, o) = side_events(ch, threshold, polarity, debounce);
        events.heel_strikes[side] = s;
        events.toe_offs[side] = o;
    }
    let missing: Vec<&str> = ["left", "right"]
        .iter()
        .enumerate()
        .filter(|(s, _)| events.cycles(*s) == 0)
        .map(|(_, n)| *n)
        .collect();
    if !missing.is_empty() {
        return Err(RefError::ZeroCycles(missing.join(", ")));
    }
    Ok(events)
}

/// Which cycles to average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleSelection {
    /// Leading cycles to discard.
    pub skip: usize,
    pub count: usize,
    /// Use every available cycle when fewer than `skip + count` exist.
    pub allow_fewer: bool,
}

impl Default for CycleSelection {
    fn default() -> Self {
        Self {
            skip: 0,
            count: 10,
            allow_fewer: false,
        }
    }
}

/// Pointwise mean and population standard deviation of resampled cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleAverage {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub cycles: usize,
}

fn interp(signal: &[f64], s: f64) -> f64 {
    let k = s.floor() as usize;
    if k + 1 >= signal.len() {
        return signal[signal.len() - 1];
    }
    let w = s - k as f64;
    signal[k] + w * (signal[k + 1] - signal[k])
}

/// Resamples one cycle (heel strike to next heel strike, both included) to
/// `points` samples.
pub fn resample_cycle(signal: &[f64], start: usize, end: usize, points: usize) -> Vec<f64> {
    let span = (end - start) as f64;
    (0..points)
        .map(|j| interp(signal, start as f64 + span * j as f64 / (points - 1) as f64))
        .collect()
}

/// Averages the selected heel-strike-delimited cycles of `signal`.
pub fn cycle_normalize(
    signal: &[f64],
    heel_strikes: &[usize],
    selection: CycleSelection,
    points: usize,
) -> Result<CycleAverage, RefError> {
    if points < 2 {
        return Err(RefError::InvalidArgument("need at least two points per cycle".into()));
    }
    let available: Vec<(usize, usize)> = heel_strikes
        .windows(2)
        .filter(|w| w[1] < signal.len())
        .map(|w| (w[0], w[1]))
        .collect();
    let needed = selection.skip + selection.count;
    let chosen: Vec<(usize, usize)> = if available.len() >= needed {
        available[selection.skip..needed].to_vec()
    } else if selection.allow_fewer && !available.is_empty() {
        let skip = if available.len() > selection.skip { selection.skip } else { 0 };
        available[skip..].iter().copied().take(selection.count).collect()
    } else {
        return Err(RefError::InsufficientCycles {
            found: available.len(),
            needed,
        });
    };
    if chosen.is_empty() {
        return Err(RefError::InsufficientCycles { found: 0, needed });
    }
    let curves: Vec<Vec<f64>> = chosen
        .iter()
        .map(|&(a, b)| resample_cycle(signal, a, b, points))
        .collect();
    let n = curves.len() as f64;
    let mean: Vec<f64> = (0..points).map(|j| curves.iter().map(|c| c[j]).sum::<f64>() / n).collect();
    let std = (0..points)
        .map(|j| (curves.iter().map(|c| (c[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    Ok(CycleAverage {
        mean,
        std,
        cycles: curves.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize, on: &[(usize, usize)]) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for &(a, b) in on {
            v[a..b].iter_mut().for_each(|x| *x = 1.0);
        }
        v
    }

    #[test]
    fn square_wave_edges_are_recovered() {
        let l = square(400, &[(10, 70), (110, 170), (210, 270), (310, 370)]);
        let r = square(400, &[(60, 120), (160, 220), (260, 320)]);
        let ev = detect_gait_events([&l, &r], 0.05, EventPolarity::Force, 100.0).unwrap();
        assert_eq!(ev.heel_strikes[0], vec![10, 110, 210, 310]);
        assert_eq!(ev.toe_offs[0], vec![70, 170, 270, 370]);
        assert_eq!(ev.heel_strikes[1], vec![60, 160, 260]);
        assert_eq!(ev.cycles(1), 2);
    }

    #[test]
    fn debounce_rejects_chatter() {
        let mut l = square(300, &[(20, 120), (170, 270)]);
        l[60] = 0.0; // one-frame dropout mid-stance
        l[140] = 1.0; // one-frame spike in swing
        let ev = detect_gait_events([&l, &l], 0.5, EventPolarity::Force, 100.0).unwrap();
        assert_eq!(ev.heel_strikes[0], vec![20, 170]);
        assert_eq!(ev.toe_offs[0], vec![120, 270]);
    }

    #[test]
    fn zero_signal_reports_both_sides() {
        let z = vec![0.0; 100];
        match detect_gait_events([&z, &z], 0.05, EventPolarity::Force, 100.0) {
            Err(RefError::ZeroCycles(s)) => assert_eq!(s, "left, right"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn height_polarity_inverts_contact() {
        let h: Vec<f64> = square(300, &[(0, 20), (80, 120), (180, 220)]).iter().map(|v| v * 0.1).collect();
        let ev = detect_gait_events([&h, &h], 0.01, EventPolarity::Height, 100.0).unwrap();
        assert_eq!(ev.heel_strikes[0], vec![20, 120, 220]);
    }

    #[test]
    fn averaging_examples() {
        let c: Vec<f64> = (0..=10).map(|i| (std::f64::consts::TAU * i as f64 / 10.0).sin()).collect();
        let mut sig = c.clone();
        sig.extend(c[1..].iter().map(|v| 3.0 * v));
        let avg = cycle_normalize(
            &sig,
            &[0, 10, 20],
            CycleSelection {
                skip: 0,
                count: 2,
                allow_fewer: false,
            },
            11,
        )
        .unwrap();
        for j in 0..11 {
            assert!((avg.mean[j] - 2.0 * c[j]).abs() < 1e-12);
        }
        let err = cycle_normalize(&sig, &[0, 10, 20], CycleSelection::default(), 11).unwrap_err();
        assert!(matches!(err, RefError::InsufficientCycles { found: 2, needed: 10 }));
    }
}
