use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Recording;
use crate::error::{Error, Result};

/// Fraction of each beat period occupied by the raised-cosine pulse.
const PULSE_DUTY: f64 = 0.8;
/// Width (standard deviation) of a synthetic R wave, seconds.
const R_WAVE_SIGMA_S: f64 = 0.01;
/// Beat phase at t = 0, so the first R wave falls half a beat in.
const INITIAL_BEAT_PHASE: f64 = 0.5;
/// Artifact tones fade in over this many seconds after their onset.
const TONE_RAMP_S: f64 = 1.0;

/// Piecewise-linear function of time, held constant beyond the first and last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::param("piecewise-linear trace needs at least one knot"));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { knots })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            knots: vec![(0.0, value)],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        for pair in k.windows(2) {
            let ((t0, v0), (t1, v1)) = (pair[0], pair[1]);
            if t <= t1 {
                if t1 == t0 {
                    return v1;
                }
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
            }
        }
        k[k.len() - 1].1
    }

    /// Exact integral over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        let mut breaks = vec![a];
        breaks.extend(self.knots.iter().map(|k| k.0).filter(|&t| t > a && t < b));
        breaks.push(b);
        breaks
            .windows(2)
            .map(|w| 0.5 * (self.eval(w[0]) + self.eval(w[1])) * (w[1] - w[0]))
            .sum()
    }

    fn range(&self) -> (f64, f64) {
        self.knots
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| (lo.min(k.1), hi.max(k.1)))
    }
}

/// Motion-artifact tone present in both the PPG and the accelerometer.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactTone {
    /// Instantaneous frequency in Hz over time.
    pub freq_hz: PiecewiseLinear,
    pub amplitude: f64,
    /// Onset time, seconds. The tone ramps in over one second.
    pub start_s: f64,
    /// Per-axis accelerometer gains (x, y, z).
    pub axes: [f64; 3],
}

impl ArtifactTone {
    pub fn steady(freq_hz: f64, amplitude: f64) -> Self {
        Self {
            freq_hz: PiecewiseLinear::constant(freq_hz),
            amplitude,
            start_s: 0.0,
            axes: [1.0, 0.5, 0.25],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub duration_s: f64,
    pub fs: f64,
    /// Heart rate in BPM over time.
    pub hr_trace: PiecewiseLinear,
    pub tones: Vec<ArtifactTone>,
    /// Standard deviation of white noise added to the PPG.
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.hr_trace.range();
        if lo < 40.0 || hi > 220.0 {
            return Err(Error::param(format!("hr trace must stay in [40, 220] BPM, got [{lo}, {hi}]")));
        }
        if !(self.fs > 0.0) || !(self.duration_s > 0.0) {
            return Err(Error::param("duration and sampling rate must be positive"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::param("noise_std must be >= 0"));
        }
        Ok(())
    }
}

/// Standard deviation of the unit pulse train, so callers can set noise by SNR.
pub fn pulse_train_std() -> f64 {
    // mean of p^2 over a beat = duty * 3/8, mean of p = duty / 2
    let d = PULSE_DUTY;
    (d * 3.0 / 8.0 - (d / 2.0).powi(2)).sqrt()
}

fn pulse(phase_frac: f64) -> f64 {
    if phase_frac < PULSE_DUTY {
        0.5 * (1.0 - (2.0 * PI * phase_frac / PULSE_DUTY).cos())
    } else {
        0.0
    }
}

/// Generates a recording whose heart rate follows `spec.hr_trace` exactly.
///
/// Beat `k` starts where the cumulative beat count `∫ hr/60 dt` crosses `k`;
/// the ECG carries a narrow Gaussian R wave at each crossing.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Recording> {
    spec.validate()?;
    let n = (spec.duration_s * spec.fs).round() as usize;
    let dt = 1.0 / spec.fs;
    let time = |i: usize| i as f64 * dt;

    // Cumulative beat count at each sample, integrated piece by piece.
    let mut beats = Vec::with_capacity(n);
    let mut acc = INITIAL_BEAT_PHASE;
    for i in 0..n {
        if i > 0 {
            acc += spec.hr_trace.integral(time(i - 1), time(i)) / 60.0;
        }
        beats.push(acc);
    }

    let mut ppg: Vec<f64> = beats.iter().map(|b| pulse(b.fract())).collect();

    let mut ecg = vec![0.0; n];
    let half_width = (5.0 * R_WAVE_SIGMA_S * spec.fs).ceil() as isize;
    for i in 1..n {
        let (b0, b1) = (beats[i - 1], beats[i]);
        if b1.floor() > b0.floor() {
            let frac = (b1.floor() - b0) / (b1 - b0);
            let t_peak = time(i - 1) + frac * dt;
            let centre = (t_peak * spec.fs).round() as isize;
            for j in (centre - half_width)..=(centre + half_width) {
                if j < 0 || j as usize >= n {
                    continue;
                }
                let u = (time(j as usize) - t_peak) / R_WAVE_SIGMA_S;
                ecg[j as usize] += (-0.5 * u * u).exp();
            }
        }
    }

    let mut acc_x = vec![0.0; n];
    let mut acc_y = vec![0.0; n];
    let mut acc_z = vec![0.0; n];
    for tone in &spec.tones {
        let mut phase = 0.0;
        for i in 0..n {
            let t = time(i);
            if i > 0 {
                phase += 2.0 * PI * tone.freq_hz.integral(time(i - 1), t);
            }
            let envelope = ((t - tone.start_s) / TONE_RAMP_S).clamp(0.0, 1.0);
            let v = tone.amplitude * envelope * phase.sin();
            ppg[i] += v;
            acc_x[i] += tone.axes[0] * v;
            acc_y[i] += tone.axes[1] * v;
            acc_z[i] += tone.axes[2] * v;
        }
    }

    if spec.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_std).map_err(|e| Error::param(e.to_string()))?;
        for v in &mut ppg {
            *v += normal.sample(&mut rng);
        }
    }

    Ok(Recording {
        subject_id: format!("synthetic-{}", spec.seed),
        fs: spec.fs,
        ppg,
        acc_x,
        acc_y,
        acc_z,
        ecg: Some(ecg),
    })
}
