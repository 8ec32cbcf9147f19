//! Zero-lag Butterworth low-pass (second-order section run forward and
//! backward).

use super::RefError;

/// Two passes square the magnitude response, moving the −3 dB point below
/// the single-pass cutoff by `(√2 − 1)^(1/4)`. The design cutoff is widened
/// by the inverse so the combined response is −3 dB at the nominal cutoff.
pub const CUTOFF_CORRECTION: f64 = 1.246_504_702_770_927;

/// Effective order of the forward–backward filter.
pub const EFFECTIVE_ORDER: usize = 4;
/// Signals must be longer than this.
pub const MIN_FILTER_LENGTH: usize = 6 * EFFECTIVE_ORDER;
const PAD: usize = 9;

/// Second-order IIR section in transposed direct form II (`a0 = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Second-order Butterworth low-pass by the bilinear transform with
    /// prewarping at `cutoff` (Hz). `correction` scales the prewarped
    /// analog cutoff.
    pub fn butterworth_lowpass(cutoff: f64, sample_rate: f64, correction: f64) -> Self {
        let k = (std::f64::consts::PI * cutoff / sample_rate).tan() * correction;
        let s2 = std::f64::consts::SQRT_2;
        let norm = 1.0 / (1.0 + s2 * k + k * k);
        let b0 = k * k * norm;
        Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - s2 * k + k * k) * norm],
        }
    }

    /// Steady-state internal state for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let gain = self.b.iter().sum::<f64>() / (1.0 + self.a[0] + self.a[1]);
        let z2 = self.b[2] - self.a[1] * gain;
        let z1 = self.b[1] - self.a[0] * gain + z2;
        [z1, z2]
    }

    fn run(&self, x: &[f64]) -> Vec<f64> {
        let zi = self.step_state();
        let mut z = [zi[0] * x[0], zi[1] * x[0]];
        x.iter()
            .map(|&xi| {
                let y = self.b[0] * xi + z[0];
                z[0] = self.b[1] * xi - self.a[0] * y + z[1];
                z[1] = self.b[2] * xi - self.a[1] * y;
                y
            })
            .collect()
    }
}

/// Zero-phase low-pass filter. The edges are extended by odd reflection and
/// both passes start from the steady state of their first sample.
pub fn zero_lag_lowpass(signal: &[f64], sample_rate: f64, cutoff: f64) -> Result<Vec<f64>, RefError> {
    let n = signal.len();
    if n <= MIN_FILTER_LENGTH {
        return Err(RefError::TooShort {
            len: n,
            min: MIN_FILTER_LENGTH,
        });
    }
    if !(cutoff > 0.0 && cutoff < 0.5 * sample_rate) {
        return Err(RefError::InvalidArgument(format!(
            "cutoff {cutoff} Hz must lie in (0, {}) Hz",
            0.5 * sample_rate
        )));
    }
    let section = Biquad::butterworth_lowpass(cutoff, sample_rate, CUTOFF_CORRECTION);
    let pad = PAD.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * signal[0] - signal[i]));
    ext.extend_from_slice(signal);
    ext.extend((1..=pad).map(|i| 2.0 * signal[n - 1] - signal[n - 1 - i]));

    let mut y = section.run(&ext);
    y.reverse();
    let mut y = section.run(&y);
    y.reverse();
    Ok(y[pad..pad + n].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correction_constant() {
        let c = (2f64.sqrt() - 1.0).powf(-0.25);
        assert!((c - CUTOFF_CORRECTION).abs() < 1e-14);
    }

    #[test]
    fn dc_passes_unchanged() {
        let x = vec![3.7; 200];
        let y = zero_lag_lowpass(&x, 100.0, 4.0).unwrap();
        assert!(y.iter().all(|v| (v - 3.7).abs() < 1e-9));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            zero_lag_lowpass(&[1.0; 10], 100.0, 4.0),
            Err(RefError::TooShort { .. })
        ));
        assert!(zero_lag_lowpass(&[1.0; 100], 100.0, 60.0).is_err());
    }

    #[test]
    fn analog_gain_at_cutoff() {
        // |H|² at the nominal cutoff for one corrected section, squared for two passes
        let s = Biquad::butterworth_lowpass(4.0, 100.0, CUTOFF_CORRECTION);
        let w = 2.0 * std::f64::consts::PI * 4.0 / 100.0;
        let z1 = z_inverse(w);
        let h = |z: (f64, f64)| {
            let num = cadd(cadd((s.b[0], 0.0), cmul((s.b[1], 0.0), z)), cmul((s.b[2], 0.0), cmul(z, z)));
            let den = cadd(cadd((1.0, 0.0), cmul((s.a[0], 0.0), z)), cmul((s.a[1], 0.0), cmul(z, z)));
            (num.0 * num.0 + num.1 * num.1).sqrt() / (den.0 * den.0 + den.1 * den.1).sqrt()
        };
        let g = h(z1).powi(2);
        let db = 20.0 * g.log10();
        assert!((db + 3.0103).abs() < 1e-3, "{db}");
    }

    fn z_inverse(w: f64) -> (f64, f64) {
        (w.cos(), -w.sin())
    }
    fn cadd(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
        (a.0 + b.0, a.1 + b.1)
    }
    fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
        (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
    }
}
