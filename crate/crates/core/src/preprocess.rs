//! Band-limiting and temporal differencing of raw channels.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Linear-phase FIR bandpass design parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub low_cut: f64,
    pub high_cut: f64,
    pub taps: usize,
    pub fs: f64,
}

impl FilterSpec {
    /// 0.4–5 Hz with 251 taps, the PPG/accelerometer default at 125 Hz.
    pub fn ppg_band(fs: f64) -> Self {
        Self {
            low_cut: 0.4,
            high_cut: 5.0,
            taps: 251,
            fs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.low_cut && self.low_cut < self.high_cut && self.high_cut < self.fs / 2.0) {
            return Err(Error::param(format!(
                "need 0 < low_cut < high_cut < fs/2, got {} / {} / {}",
                self.low_cut, self.high_cut, self.fs
            )));
        }
        if self.taps % 2 == 0 || self.taps < 3 {
            return Err(Error::param(format!("taps must be odd and >= 3, got {}", self.taps)));
        }
        Ok(())
    }

    /// Hamming-windowed sinc coefficients (symmetric, `taps` long).
    pub fn design(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let m = (self.taps - 1) as f64;
        let fl = self.low_cut / self.fs;
        let fh = self.high_cut / self.fs;
        let h = (0..self.taps)
            .map(|i| {
                let k = i as f64 - m / 2.0;
                let ideal = if k == 0.0 {
                    2.0 * (fh - fl)
                } else {
                    ((2.0 * PI * fh * k).sin() - (2.0 * PI * fl * k).sin()) / (PI * k)
                };
                let window = 0.54 - 0.46 * (2.0 * PI * i as f64 / m).cos();
                ideal * window
            })
            .collect();
        Ok(h)
    }
}

/// Applies a symmetric FIR with group-delay compensation.
///
/// Both ends are extended by mirror reflection (edge sample not repeated) so
/// the output has the input's length and timing.
pub fn fir_zero_delay(signal: &[f64], coeffs: &[f64]) -> Result<Vec<f64>> {
    let taps = coeffs.len();
    if signal.len() <= taps {
        return Err(Error::length(format!(
            "signal of {} samples is not longer than the {taps}-tap filter",
            signal.len()
        )));
    }
    let half = taps / 2;
    let n = signal.len();
    let mut padded = Vec::with_capacity(n + 2 * half);
    padded.extend((1..=half).rev().map(|k| signal[k]));
    padded.extend_from_slice(signal);
    padded.extend((1..=half).map(|k| signal[n - 1 - k]));

    Ok((0..n)
        .map(|i| {
            padded[i..i + taps]
                .iter()
                .zip(coeffs.iter().rev())
                .map(|(x, c)| x * c)
                .sum()
        })
        .collect())
}

pub fn bandpass(signal: &[f64], spec: &FilterSpec) -> Result<Vec<f64>> {
    fir_zero_delay(signal, &spec.design()?)
}

/// `out[i] = s[i+2] - 2 s[i+1] + s[i]`.
pub fn second_difference(signal: &[f64]) -> Result<Vec<f64>> {
    if signal.len() < 3 {
        return Err(Error::length(format!(
            "second difference needs at least 3 samples, got {}",
            signal.len()
        )));
    }
    Ok(signal.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssr::periodogram;
    use proptest::prelude::*;

    fn tone(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    // Steady-state gain measured away from the reflected edges.
    fn measured_gain(freq: f64) -> f64 {
        let x = tone(freq, 125.0, 4000);
        let y = bandpass(&x, &FilterSpec::ppg_band(125.0)).unwrap();
        rms(&y[500..3500]) / rms(&x[500..3500])
    }

    #[test]
    fn stopband_tone_is_attenuated() {
        assert!(measured_gain(10.0) < 0.05);
    }

    #[test]
    fn passband_tone_is_preserved() {
        let g = measured_gain(2.0);
        assert!((g - 1.0).abs() < 0.05, "gain {g}");
    }

    #[test]
    fn whole_signal_passband_rms_is_preserved() {
        let x = tone(2.0, 125.0, 1000);
        let y = bandpass(&x, &FilterSpec::ppg_band(125.0)).unwrap();
        assert!((rms(&y) / rms(&x) - 1.0).abs() < 0.05);
    }

    #[test]
    fn zeros_map_to_zeros() {
        let y = bandpass(&[0.0; 600], &FilterSpec::ppg_band(125.0)).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_is_time_aligned() {
        let x = tone(1.5, 125.0, 3000);
        let y = bandpass(&x, &FilterSpec::ppg_band(125.0)).unwrap();
        let lag_corr = |lag: isize| -> f64 {
            (500..2500).map(|i| x[i] * y[(i as isize + lag) as usize]).sum()
        };
        let best = (-5..=5).max_by(|&a, &b| lag_corr(a).total_cmp(&lag_corr(b))).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn short_signal_is_a_length_error() {
        let err = bandpass(&[1.0; 251], &FilterSpec::ppg_band(125.0)).unwrap_err();
        assert!(matches!(err, Error::Length(_)));
    }

    #[test]
    fn bad_specs_are_rejected() {
        let mut spec = FilterSpec::ppg_band(125.0);
        spec.taps = 250;
        assert!(spec.design().is_err());
        let spec = FilterSpec { high_cut: 70.0, ..FilterSpec::ppg_band(125.0) };
        assert!(spec.design().is_err());
    }

    #[test]
    fn second_difference_annihilates_ramps_and_constants() {
        assert_eq!(second_difference(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(second_difference(&[1.0, 1.0, 1.0]).unwrap(), vec![0.0]);
        assert!(second_difference(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn differencing_keeps_on_grid_peak() {
        let n_fft = 4096;
        for bin in [30usize, 55, 100, 400] {
            let f = (bin - 1) as f64 * 125.0 / n_fft as f64;
            let x: Vec<f64> = (0..1000).map(|i| (2.0 * PI * f * i as f64 / 125.0).cos()).collect();
            let before = periodogram(&x, n_fft, 125.0).unwrap().physical_argmax();
            let after = periodogram(&second_difference(&x).unwrap(), n_fft, 125.0)
                .unwrap()
                .physical_argmax();
            assert_eq!(before, bin);
            assert_eq!(after, bin);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn differencing_keeps_peak_for_any_tone(freq in 0.3f64..31.0, phase in 0.0f64..6.28) {
            let x: Vec<f64> = (0..1000)
                .map(|i| (2.0 * PI * freq * i as f64 / 125.0 + phase).cos())
                .collect();
            let before = periodogram(&x, 4096, 125.0).unwrap().physical_argmax();
            let after = periodogram(&second_difference(&x).unwrap(), 4096, 125.0)
                .unwrap()
                .physical_argmax();
            prop_assert!((before as i64 - after as i64).abs() <= 1, "{} vs {}", before, after);
        }

        #[test]
        fn bandpass_is_linear(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            seed in any::<u64>(),
        ) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..400).map(|_| rng.random::<f64>() - 0.5).collect();
            let y: Vec<f64> = (0..400).map(|_| rng.random::<f64>() - 0.5).collect();
            let spec = FilterSpec::ppg_band(125.0);
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = bandpass(&mix, &spec).unwrap();
            let fx = bandpass(&x, &spec).unwrap();
            let fy = bandpass(&y, &spec).unwrap();
            let scale = lhs.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
            for i in 0..lhs.len() {
                let rhs = a * fx[i] + b * fy[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-9 * scale);
            }
        }
    }
}
